#include "beamtrack/embedding.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace beamtrack {

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

PcaModel pca_fit(const Mat& X, int k) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (k < 1 || k > std::min(n, d))
    throw ConfigError("pca: k must satisfy 1 <= k <= min(n, d) = " +
                      std::to_string(std::min(n, d)));
  PcaModel model;
  model.mean = X.colwise().mean().transpose();
  Mat centered = X.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);

  model.components = svd.matrixV().leftCols(k).transpose();
  model.explained_variance =
      (svd.singularValues().head(k).array().square() / static_cast<Real>(n)).matrix();

  for (Eigen::Index i = 0; i < model.components.rows(); ++i) {
    Eigen::Index arg = 0;
    model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.components(i, arg) < 0)
      model.components.row(i) = -model.components.row(i);
  }
  return model;
}

Vec pca_embed(const PcaModel& model, const Vec& x) {
  if (x.size() != model.mean.size())
    throw ContractError("pca_embed: input length mismatch");
  return model.components * (x - model.mean);
}

Mat pca_embed_batch(const PcaModel& model, const Mat& X) {
  if (X.cols() != model.mean.size())
    throw ContractError("pca_embed: input width mismatch");
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Vec pca_reconstruct(const PcaModel& model, const Vec& z) {
  if (z.size() != model.components.rows())
    throw ContractError("pca_reconstruct: embedding length mismatch");
  return model.components.transpose() * z + model.mean;
}

// ---------------------------------------------------------------------------
// Trained embedders
// ---------------------------------------------------------------------------

void EmbedTrainOptions::validate() const {
  if (hidden < 1 || epochs < 0 || batch_size < 1)
    throw ConfigError("embedder options: hidden/batch must be >= 1, epochs >= 0");
  if (learning_rate < 0)
    throw ConfigError("embedder options: learning_rate must be >= 0");
}

json EmbedTrainOptions::to_json() const {
  return {{"hidden", hidden},
          {"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"activation", nn::to_string(activation)},
          {"seed", seed},
          {"clip_norm", clip_norm}};
}

EmbedTrainOptions EmbedTrainOptions::from_json(const json& j) {
  EmbedTrainOptions o;
  o.hidden = j.value("hidden", o.hidden);
  o.epochs = j.value("epochs", o.epochs);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.batch_size = j.value("batch_size", o.batch_size);
  if (j.contains("activation"))
    o.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  o.seed = j.value("seed", o.seed);
  o.clip_norm = j.value("clip_norm", o.clip_norm);
  o.validate();
  return o;
}

namespace {

Mat gather_rows(const Mat& X, const std::vector<size_t>& idx, size_t lo, size_t hi) {
  Mat out(static_cast<Eigen::Index>(hi - lo), X.cols());
  for (size_t i = lo; i < hi; ++i)
    out.row(static_cast<Eigen::Index>(i - lo)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

Mat AeModel::encode(const Mat& X) const { return enc2.forward(enc1.forward(X)); }
Mat AeModel::decode(const Mat& Z) const { return dec2.forward(dec1.forward(Z)); }

AeModel ae_train(const Mat& X, int k, const EmbedTrainOptions& opts) {
  opts.validate();
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 1 || d < 1)
    throw ContractError("ae_train: empty input");
  if (k < 1)
    throw ConfigError("ae_train: k must be >= 1");

  AeModel model;
  model.enc1 = nn::Dense("ae.enc1", static_cast<int>(d), opts.hidden, opts.activation);
  model.enc2 = nn::Dense("ae.enc2", opts.hidden, k, nn::Activation::linear);
  model.dec1 = nn::Dense("ae.dec1", k, opts.hidden, opts.activation);
  model.dec2 = nn::Dense("ae.dec2", opts.hidden, static_cast<int>(d), nn::Activation::linear);

  Rng rng(opts.seed);
  model.enc1.init(rng);
  model.enc2.init(rng);
  model.dec1.init(rng);
  model.dec2.init(rng);

  std::vector<nn::Param*> params;
  for (nn::Dense* layer : {&model.enc1, &model.enc2, &model.dec1, &model.dec2})
    for (nn::Param* p : layer->params())
      params.push_back(p);
  nn::Adam adam{{opts.learning_rate}};

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    auto order = shuffled_indices(static_cast<size_t>(n), rng);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t lo = 0; lo < order.size(); lo += opts.batch_size) {
      const size_t hi = std::min(order.size(), lo + opts.batch_size);
      Mat batch = gather_rows(X, order, lo, hi);

      nn::Dense::Cache c1, c2, c3, c4;
      Mat out = model.dec2.forward(
          model.dec1.forward(model.enc2.forward(model.enc1.forward(batch, &c1), &c2), &c3),
          &c4);
      Mat diff = out - batch;
      const double denom = static_cast<double>(diff.size());
      const Real loss = static_cast<Real>(diff.squaredNorm() / denom);
      if (!std::isfinite(loss))
        throw TrainingError("autoencoder diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      for (nn::Param* p : params)
        p->zero_grad();
      Mat dout = (2.0 / denom) * diff;
      Mat g = model.dec2.backward(dout, c4);
      g = model.dec1.backward(g, c3);
      g = model.enc2.backward(g, c2);
      model.enc1.backward(g, c1);
      adam.step(params, opts.clip_norm);
      epoch_loss += loss;
      ++batches;
    }
    model.epoch_losses.push_back(static_cast<Real>(epoch_loss / std::max<size_t>(batches, 1)));
  }
  return model;
}

Mat ClsModel::embed_batch(const Mat& X) const { return l2.forward(l1.forward(X)); }
Mat ClsModel::logits(const Mat& X) const { return out.forward(embed_batch(X)); }

ClsModel cls_train(const Mat& X, const std::vector<std::vector<int>>& beam_sets,
                   int num_beams, int k, const EmbedTrainOptions& opts) {
  opts.validate();
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 1 || d < 1)
    throw ContractError("cls_train: empty input");
  if (beam_sets.size() != static_cast<size_t>(n))
    throw ContractError("cls_train: one beam set per row required");
  if (num_beams < 1 || k < 1)
    throw ConfigError("cls_train: num_beams and k must be >= 1");

  Mat targets = Mat::Zero(n, num_beams);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int beam : beam_sets[i]) {
      if (beam < 0 || beam >= num_beams)
        throw DataError("cls_train: beam index out of range");
      targets(i, beam) = 1;
    }

  ClsModel model;
  model.l1 = nn::Dense("cls.l1", static_cast<int>(d), opts.hidden, opts.activation);
  model.l2 = nn::Dense("cls.l2", opts.hidden, k, opts.activation);
  model.out = nn::Dense("cls.out", k, num_beams, nn::Activation::linear);

  Rng rng(opts.seed);
  model.l1.init(rng);
  model.l2.init(rng);
  model.out.init(rng);

  std::vector<nn::Param*> params;
  for (nn::Dense* layer : {&model.l1, &model.l2, &model.out})
    for (nn::Param* p : layer->params())
      params.push_back(p);
  nn::Adam adam{{opts.learning_rate}};

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    auto order = shuffled_indices(static_cast<size_t>(n), rng);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t lo = 0; lo < order.size(); lo += opts.batch_size) {
      const size_t hi = std::min(order.size(), lo + opts.batch_size);
      Mat bx = gather_rows(X, order, lo, hi);
      Mat by = gather_rows(targets, order, lo, hi);

      nn::Dense::Cache c1, c2, c3;
      Mat z = model.out.forward(model.l2.forward(model.l1.forward(bx, &c1), &c2), &c3);

      // Stable BCE-with-logits: max(z,0) - z*y + log(1 + exp(-|z|)).
      const double denom = static_cast<double>(z.size());
      Mat pos = z.cwiseMax(Real(0));
      Mat soft = (1.0 + (-z.array().abs()).exp()).log().matrix();
      const Real loss = static_cast<Real>(
          (pos - z.cwiseProduct(by) + soft).sum() / denom);
      if (!std::isfinite(loss))
        throw TrainingError("classifier embedder diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));
      for (nn::Param* p : params)
        p->zero_grad();
      Mat sig = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      Mat dz = (sig - by) / static_cast<Real>(denom);
      Mat g = model.out.backward(dz, c3);
      g = model.l2.backward(g, c2);
      model.l1.backward(g, c1);
      adam.step(params, opts.clip_norm);
      epoch_loss += loss;
      ++batches;
    }
    model.epoch_losses.push_back(static_cast<Real>(epoch_loss / std::max<size_t>(batches, 1)));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Uniform interface
// ---------------------------------------------------------------------------

Vec embed_image(const ImageEmbedder& embedder, const FeatureMap& fm) {
  Vec flat = fm.flatten();
  if (flat.size() != embedder.in_dim())
    throw ContractError("embed_image: feature map size " + std::to_string(flat.size()) +
                        " != embedder input " + std::to_string(embedder.in_dim()));
  return embedder.embed_flat(flat);
}

namespace {

json dense_meta(const nn::Dense& layer) {
  return {{"in", layer.in_dim()}, {"out", layer.out_dim()},
          {"act", nn::to_string(layer.act)}};
}

void pack_dense(const nn::Dense& layer, std::vector<double>& payload) {
  pack_mat(payload, layer.W.value);
  pack_mat(payload, layer.b.value);
}

nn::Dense unpack_dense(const std::string& name, const json& meta,
                       const std::vector<double>& payload, size_t& pos) {
  nn::Dense layer(name, meta.at("in").get<int>(), meta.at("out").get<int>(),
                  nn::activation_from_string(meta.at("act").get<std::string>()));
  layer.W.value = unpack_mat(payload, pos, layer.W.value.rows(), layer.W.value.cols());
  layer.b.value = unpack_mat(payload, pos, 1, layer.b.value.cols());
  return layer;
}

class PcaEmbedder : public ImageEmbedder {
 public:
  explicit PcaEmbedder(PcaModel m) : model_(std::move(m)) {}
  std::string kind() const override { return "pca"; }
  int in_dim() const override { return model_.in_dim(); }
  int dim() const override { return model_.out_dim(); }
  Vec embed_flat(const Vec& x) const override { return pca_embed(model_, x); }
  void save(json& meta, std::vector<double>& payload) const override {
    meta = {{"kind", "pca"}, {"d", model_.in_dim()}, {"k", model_.out_dim()}};
    pack_mat(payload, model_.mean.transpose());
    pack_mat(payload, model_.components);
    pack_mat(payload, model_.explained_variance.transpose());
  }

 private:
  PcaModel model_;
};

class AeEmbedder : public ImageEmbedder {
 public:
  explicit AeEmbedder(AeModel m) : model_(std::move(m)) {}
  std::string kind() const override { return "ae"; }
  int in_dim() const override { return model_.in_dim(); }
  int dim() const override { return model_.bottleneck(); }
  Vec embed_flat(const Vec& x) const override {
    return model_.encode(x.transpose()).row(0).transpose();
  }
  void save(json& meta, std::vector<double>& payload) const override {
    meta = {{"kind", "ae"},
            {"enc1", dense_meta(model_.enc1)},
            {"enc2", dense_meta(model_.enc2)},
            {"dec1", dense_meta(model_.dec1)},
            {"dec2", dense_meta(model_.dec2)}};
    pack_dense(model_.enc1, payload);
    pack_dense(model_.enc2, payload);
    pack_dense(model_.dec1, payload);
    pack_dense(model_.dec2, payload);
  }

 private:
  AeModel model_;
};

class ClsEmbedder : public ImageEmbedder {
 public:
  explicit ClsEmbedder(ClsModel m) : model_(std::move(m)) {}
  std::string kind() const override { return "cls"; }
  int in_dim() const override { return model_.in_dim(); }
  int dim() const override { return model_.bottleneck(); }
  Vec embed_flat(const Vec& x) const override {
    return model_.embed_batch(x.transpose()).row(0).transpose();
  }
  void save(json& meta, std::vector<double>& payload) const override {
    meta = {{"kind", "cls"},
            {"l1", dense_meta(model_.l1)},
            {"l2", dense_meta(model_.l2)},
            {"out", dense_meta(model_.out)}};
    pack_dense(model_.l1, payload);
    pack_dense(model_.l2, payload);
    pack_dense(model_.out, payload);
  }

 private:
  ClsModel model_;
};

}  // namespace

std::unique_ptr<ImageEmbedder> make_pca_embedder(PcaModel model) {
  return std::make_unique<PcaEmbedder>(std::move(model));
}
std::unique_ptr<ImageEmbedder> make_ae_embedder(AeModel model) {
  return std::make_unique<AeEmbedder>(std::move(model));
}
std::unique_ptr<ImageEmbedder> make_cls_embedder(ClsModel model) {
  return std::make_unique<ClsEmbedder>(std::move(model));
}

std::unique_ptr<ImageEmbedder> load_embedder(const json& meta,
                                             const std::vector<double>& payload, size_t& pos) {
  const std::string kind = meta.value("kind", "");
  if (kind == "pca") {
    const int d = meta.at("d").get<int>();
    const int k = meta.at("k").get<int>();
    PcaModel m;
    m.mean = unpack_mat(payload, pos, 1, d).row(0).transpose();
    m.components = unpack_mat(payload, pos, k, d);
    m.explained_variance = unpack_mat(payload, pos, 1, k).row(0).transpose();
    return make_pca_embedder(std::move(m));
  }
  if (kind == "ae") {
    AeModel m;
    m.enc1 = unpack_dense("ae.enc1", meta.at("enc1"), payload, pos);
    m.enc2 = unpack_dense("ae.enc2", meta.at("enc2"), payload, pos);
    m.dec1 = unpack_dense("ae.dec1", meta.at("dec1"), payload, pos);
    m.dec2 = unpack_dense("ae.dec2", meta.at("dec2"), payload, pos);
    return make_ae_embedder(std::move(m));
  }
  if (kind == "cls") {
    ClsModel m;
    m.l1 = unpack_dense("cls.l1", meta.at("l1"), payload, pos);
    m.l2 = unpack_dense("cls.l2", meta.at("l2"), payload, pos);
    m.out = unpack_dense("cls.out", meta.at("out"), payload, pos);
    return make_cls_embedder(std::move(m));
  }
  throw CheckpointError("unknown embedder kind '" + kind + "'");
}

}  // namespace beamtrack
