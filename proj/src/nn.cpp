#include "beamtrack/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace beamtrack::nn {

namespace {

Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

Mat hcat(const Mat& a, const Mat& b) {
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

void Param::init_uniform(Rng& rng, int fan_in) {
  const Real s = Real(1) / std::sqrt(static_cast<Real>(std::max(fan_in, 1)));
  for (Eigen::Index i = 0; i < value.rows(); ++i)
    for (Eigen::Index j = 0; j < value.cols(); ++j)
      value(i, j) = (2 * rng.uniform() - 1) * s;
}

Real global_grad_norm(const std::vector<Param*>& params) {
  double total = 0.0;
  for (const Param* p : params)
    total += static_cast<double>(p->grad.squaredNorm());
  return static_cast<Real>(std::sqrt(total));
}

Real clip_gradients(const std::vector<Param*>& params, Real clip_norm) {
  Real norm = global_grad_norm(params);
  if (clip_norm > 0 && norm > clip_norm) {
    const Real scale = clip_norm / norm;
    for (Param* p : params)
      p->grad *= scale;
  }
  return norm;
}

void Adam::step(const std::vector<Param*>& params, Real clip_norm) {
  clip_gradients(params, clip_norm);
  ++step_count;
  const Real bc1 = Real(1) - std::pow(cfg.beta1, static_cast<Real>(step_count));
  const Real bc2 = Real(1) - std::pow(cfg.beta2, static_cast<Real>(step_count));
  for (Param* p : params) {
    p->adam_m = cfg.beta1 * p->adam_m + (1 - cfg.beta1) * p->grad;
    p->adam_v = (cfg.beta2 * p->adam_v.array() +
                 (1 - cfg.beta2) * p->grad.array().square()).matrix();
    Mat update = (cfg.lr * (p->adam_m.array() / bc1) /
                  ((p->adam_v.array() / bc2).sqrt() + cfg.eps)).matrix();
    p->value -= update;
  }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  throw ContractError("unknown activation");
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + s + "'");
}

Dense::Dense(const std::string& prefix, int in, int out, Activation a)
    : W(prefix + ".W", out, in), b(prefix + ".b", 1, out), act(a) {}

void Dense::init(Rng& rng) {
  W.init_uniform(rng, in_dim());
  b.init_uniform(rng, in_dim());
}

Mat Dense::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != W.value.cols())
    throw ContractError("dense '" + W.name + "': input width " + std::to_string(x.cols()) +
                        " != " + std::to_string(W.value.cols()));
  Mat pre = x * W.value.transpose();
  pre.rowwise() += b.value.row(0);
  Mat out;
  switch (act) {
    case Activation::linear: out = std::move(pre); break;
    case Activation::relu: out = pre.cwiseMax(Real(0)); break;
    case Activation::tanh: out = pre.array().tanh().matrix(); break;
    case Activation::sigmoid: out = sigmoid(pre); break;
  }
  if (cache) {
    cache->x = x;
    cache->out = out;
  }
  return out;
}

Mat Dense::backward(const Mat& dout, const Cache& cache) {
  Mat dpre;
  switch (act) {
    case Activation::linear:
      dpre = dout;
      break;
    case Activation::relu:
      dpre = (dout.array() * (cache.out.array() > 0).cast<Real>()).matrix();
      break;
    case Activation::tanh:
      dpre = (dout.array() * (1 - cache.out.array().square())).matrix();
      break;
    case Activation::sigmoid:
      dpre = (dout.array() * cache.out.array() * (1 - cache.out.array())).matrix();
      break;
  }
  W.grad += dpre.transpose() * cache.x;
  b.grad.row(0) += dpre.colwise().sum();
  return dpre * W.value;
}

std::vector<Param*> Dense::params() { return {&W, &b}; }

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

GruLayerParams::GruLayerParams(const std::string& prefix, int in, int hidden)
    : Wz(prefix + ".Wz", hidden, in), Wr(prefix + ".Wr", hidden, in),
      Wh(prefix + ".Wh", hidden, in), Uz(prefix + ".Uz", hidden, hidden),
      Ur(prefix + ".Ur", hidden, hidden), Uh(prefix + ".Uh", hidden, hidden),
      bz(prefix + ".bz", 1, hidden), br(prefix + ".br", 1, hidden),
      bh(prefix + ".bh", 1, hidden) {}

void GruLayerParams::init(Rng& rng) {
  const int in = input(), hid = hidden();
  Wz.init_uniform(rng, in);
  Wr.init_uniform(rng, in);
  Wh.init_uniform(rng, in);
  Uz.init_uniform(rng, hid);
  Ur.init_uniform(rng, hid);
  Uh.init_uniform(rng, hid);
  bz.init_uniform(rng, hid);
  br.init_uniform(rng, hid);
  bh.init_uniform(rng, hid);
}

std::vector<Param*> GruLayerParams::params() {
  return {&Wz, &Wr, &Wh, &Uz, &Ur, &Uh, &bz, &br, &bh};
}

Vec gru_cell_forward(const GruLayerParams& p, const Vec& x, const Vec& h) {
  Mat out = gru_step(p, x.transpose(), h.transpose());
  return out.row(0).transpose();
}

Mat gru_step(const GruLayerParams& p, const Mat& x, const Mat& h_prev, GruStepCache* cache) {
  if (x.cols() != p.Wz.value.cols() || h_prev.cols() != p.Uz.value.cols() ||
      x.rows() != h_prev.rows())
    throw ContractError("gru_step: shape mismatch");
  Mat az = x * p.Wz.value.transpose() + h_prev * p.Uz.value.transpose();
  az.rowwise() += p.bz.value.row(0);
  Mat z = sigmoid(az);

  Mat ar = x * p.Wr.value.transpose() + h_prev * p.Ur.value.transpose();
  ar.rowwise() += p.br.value.row(0);
  Mat r = sigmoid(ar);

  Mat rh = r.cwiseProduct(h_prev);
  Mat ac = x * p.Wh.value.transpose() + rh * p.Uh.value.transpose();
  ac.rowwise() += p.bh.value.row(0);
  Mat hc = ac.array().tanh().matrix();

  Mat h_new = ((1 - z.array()) * h_prev.array() + z.array() * hc.array()).matrix();
  if (cache) {
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->hc = std::move(hc);
    cache->rh = std::move(rh);
  }
  return h_new;
}

Mat gru_step_backward(GruLayerParams& p, const Mat& g, const Mat& x, const Mat& h_prev,
                      const GruStepCache& c, Mat& dx) {
  Mat dz = g.cwiseProduct(c.hc - h_prev);
  Mat dhc = g.cwiseProduct(c.z);
  Mat dh_prev = (g.array() * (1 - c.z.array())).matrix();

  Mat dac = (dhc.array() * (1 - c.hc.array().square())).matrix();
  p.Wh.grad += dac.transpose() * x;
  p.Uh.grad += dac.transpose() * c.rh;
  p.bh.grad.row(0) += dac.colwise().sum();
  dx = dac * p.Wh.value;
  Mat drh = dac * p.Uh.value;
  Mat dr = drh.cwiseProduct(h_prev);
  dh_prev += drh.cwiseProduct(c.r);

  Mat daz = (dz.array() * c.z.array() * (1 - c.z.array())).matrix();
  p.Wz.grad += daz.transpose() * x;
  p.Uz.grad += daz.transpose() * h_prev;
  p.bz.grad.row(0) += daz.colwise().sum();
  dx += daz * p.Wz.value;
  dh_prev += daz * p.Uz.value;

  Mat dar = (dr.array() * c.r.array() * (1 - c.r.array())).matrix();
  p.Wr.grad += dar.transpose() * x;
  p.Ur.grad += dar.transpose() * h_prev;
  p.br.grad.row(0) += dar.colwise().sum();
  dx += dar * p.Wr.value;
  dh_prev += dar * p.Ur.value;

  return dh_prev;
}

std::string to_string(Direction d) {
  return d == Direction::bidirectional ? "bidirectional" : "forward";
}

Direction direction_from_string(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "bidirectional") return Direction::bidirectional;
  throw ConfigError("unknown direction '" + s + "'");
}

namespace {

// Runs one direction of one layer over the whole sequence. ys comes back in
// logical time order regardless of processing direction.
void layer_run(const GruLayerParams& p, const std::vector<Mat>& xs, bool reversed,
               LayerDirCache* cache, std::vector<Mat>& ys) {
  const int T = static_cast<int>(xs.size());
  const int B = static_cast<int>(xs[0].rows());
  Mat h = Mat::Zero(B, p.hidden());
  if (cache) {
    cache->hs.assign(1, h);
    cache->steps.assign(T, {});
  }
  ys.resize(T);
  for (int u = 0; u < T; ++u) {
    const int t = reversed ? T - 1 - u : u;
    h = gru_step(p, xs[t], h, cache ? &cache->steps[u] : nullptr);
    if (cache)
      cache->hs.push_back(h);
    ys[t] = h;
  }
}

void layer_run_backward(GruLayerParams& p, const std::vector<Mat>& xs, bool reversed,
                        const LayerDirCache& cache, const std::vector<Mat>& dys,
                        std::vector<Mat>& dxs) {
  const int T = static_cast<int>(xs.size());
  Mat dh = Mat::Zero(dys[0].rows(), p.hidden());
  Mat dx;
  for (int u = T - 1; u >= 0; --u) {
    const int t = reversed ? T - 1 - u : u;
    Mat g = dh + dys[t];
    dh = gru_step_backward(p, g, xs[t], cache.hs[u], cache.steps[u], dx);
    dxs[t] += dx;
  }
}

}  // namespace

GruStack::GruStack(int input, int hidden, int layers, Direction dir, Real dropout_rate)
    : direction(dir), dropout(dropout_rate), input_dim(input), hidden_dim(hidden) {
  if (input < 1 || hidden < 1 || layers < 1)
    throw ConfigError("GRU stack needs positive input, hidden and layer counts");
  if (dropout_rate < 0 || dropout_rate >= 1)
    throw ConfigError("dropout must be in [0, 1)");
  const bool bi = dir == Direction::bidirectional;
  const int inter = bi ? 2 * hidden : hidden;
  for (int l = 0; l < layers; ++l) {
    const int in = l == 0 ? input : inter;
    fwd.emplace_back("gru.l" + std::to_string(l) + ".fw", in, hidden);
    if (bi)
      bwd.emplace_back("gru.l" + std::to_string(l) + ".bw", in, hidden);
  }
}

void GruStack::init(Rng& rng) {
  for (int l = 0; l < num_layers(); ++l) {
    fwd[l].init(rng);
    if (!bwd.empty())
      bwd[l].init(rng);
  }
}

std::vector<Param*> GruStack::params() {
  std::vector<Param*> out;
  for (int l = 0; l < num_layers(); ++l) {
    for (Param* p : fwd[l].params())
      out.push_back(p);
    if (!bwd.empty())
      for (Param* p : bwd[l].params())
        out.push_back(p);
  }
  return out;
}

Mat GruStack::forward(const std::vector<Mat>& seq, bool train, Rng& rng,
                      StackTrace* trace) const {
  if (seq.empty())
    throw ContractError("GRU stack: empty sequence");
  const int T = static_cast<int>(seq.size());
  const int B = static_cast<int>(seq[0].rows());
  if (seq[0].cols() != input_dim)
    throw ContractError("GRU stack: input width " + std::to_string(seq[0].cols()) +
                        " != " + std::to_string(input_dim));
  const bool bi = direction == Direction::bidirectional;
  const int L = num_layers();
  if (trace) {
    trace->layer_inputs.assign(L, {});
    trace->fw.assign(L, {});
    trace->bw.assign(bi ? L : 0, {});
    trace->dropout_masks.assign(L > 1 ? L - 1 : 0, {});
  }

  std::vector<Mat> cur = seq;
  Mat rep;
  for (int l = 0; l < L; ++l) {
    if (trace)
      trace->layer_inputs[l] = cur;
    std::vector<Mat> ys_f, ys_b;
    layer_run(fwd[l], cur, false, trace ? &trace->fw[l] : nullptr, ys_f);
    if (bi)
      layer_run(bwd[l], cur, true, trace ? &trace->bw[l] : nullptr, ys_b);

    if (l == L - 1) {
      rep = bi ? hcat(ys_f[T - 1], ys_b[0]) : ys_f[T - 1];
      break;
    }

    std::vector<Mat> next(T);
    for (int t = 0; t < T; ++t)
      next[t] = bi ? hcat(ys_f[t], ys_b[t]) : std::move(ys_f[t]);
    if (train && dropout > 0) {
      const Real keep = 1 - dropout;
      for (int t = 0; t < T; ++t) {
        Mat mask(B, next[t].cols());
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          for (Eigen::Index j = 0; j < mask.cols(); ++j)
            mask(i, j) = rng.uniform() < keep ? 1 / keep : Real(0);
        next[t] = next[t].cwiseProduct(mask);
        if (trace)
          trace->dropout_masks[l].push_back(std::move(mask));
      }
    }
    cur = std::move(next);
  }
  return rep;
}

void GruStack::backward(const Mat& drep, StackTrace& trace) {
  const bool bi = direction == Direction::bidirectional;
  const int L = num_layers();
  const int T = static_cast<int>(trace.layer_inputs[0].size());
  const int B = static_cast<int>(drep.rows());
  const int H = hidden_dim;

  // Gradient on each layer's output sequence (concat of directions when bi).
  std::vector<Mat> dcur(T, Mat::Zero(B, bi ? 2 * H : H));
  if (bi) {
    dcur[T - 1].leftCols(H) = drep.leftCols(H);
    dcur[0].rightCols(H) = drep.rightCols(H);
  } else {
    dcur[T - 1] = drep;
  }

  for (int l = L - 1; l >= 0; --l) {
    const auto& xs = trace.layer_inputs[l];
    std::vector<Mat> dxs(T, Mat::Zero(B, xs[0].cols()));
    if (bi) {
      std::vector<Mat> dys_f(T), dys_b(T);
      for (int t = 0; t < T; ++t) {
        dys_f[t] = dcur[t].leftCols(H);
        dys_b[t] = dcur[t].rightCols(H);
      }
      layer_run_backward(fwd[l], xs, false, trace.fw[l], dys_f, dxs);
      layer_run_backward(bwd[l], xs, true, trace.bw[l], dys_b, dxs);
    } else {
      layer_run_backward(fwd[l], xs, false, trace.fw[l], dcur, dxs);
    }
    if (l > 0) {
      if (!trace.dropout_masks.empty() && !trace.dropout_masks[l - 1].empty())
        for (int t = 0; t < T; ++t)
          dxs[t] = dxs[t].cwiseProduct(trace.dropout_masks[l - 1][t]);
      dcur = std::move(dxs);
    }
  }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

namespace {

// Cross-entropy of one logit row; optionally writes softmax - onehot into drow.
double row_xent(Eigen::Ref<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> row, int label,
                Mat* dlogits, Eigen::Index out_row, Eigen::Index out_col0) {
  const double mx = static_cast<double>(row.maxCoeff());
  double se = 0.0;
  for (Eigen::Index j = 0; j < row.cols(); ++j)
    se += std::exp(static_cast<double>(row(j)) - mx);
  const double lse = mx + std::log(se);
  if (dlogits)
    for (Eigen::Index j = 0; j < row.cols(); ++j)
      (*dlogits)(out_row, out_col0 + j) =
          static_cast<Real>(std::exp(static_cast<double>(row(j)) - lse)) -
          (j == label ? Real(1) : Real(0));
  return lse - static_cast<double>(row(label));
}

}  // namespace

Real cross_entropy(const Mat& logits, const std::vector<int>& labels) {
  if (static_cast<size_t>(logits.rows()) != labels.size())
    throw ContractError("cross_entropy: one label per logit row required");
  if (logits.cols() < 1)
    throw ContractError("cross_entropy: empty logit rows");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (labels[i] < 0 || labels[i] >= logits.cols())
      throw ContractError("cross_entropy: label out of range");
    total += row_xent(logits.row(i), labels[i], nullptr, 0, 0);
  }
  return static_cast<Real>(total / logits.rows());
}

Real softmax_xent(const Mat& logits, const std::vector<int>& labels, int m, int q,
                  Mat* dlogits) {
  const Eigen::Index B = logits.rows();
  if (logits.cols() != static_cast<Eigen::Index>(m) * q)
    throw ContractError("softmax_xent: logit width != m * q");
  if (labels.size() != static_cast<size_t>(B) * m)
    throw ContractError("softmax_xent: need B * m labels");
  if (dlogits)
    dlogits->setZero(B, logits.cols());
  double total = 0.0;
  for (Eigen::Index b = 0; b < B; ++b)
    for (int k = 0; k < m; ++k) {
      const int label = labels[b * m + k];
      if (label < 0 || label >= q)
        throw ContractError("softmax_xent: label out of range");
      total += row_xent(logits.row(b).segment(k * q, q), label, dlogits, b,
                        static_cast<Eigen::Index>(k) * q);
    }
  const double denom = static_cast<double>(B) * m;
  if (dlogits)
    *dlogits /= static_cast<Real>(denom);
  return static_cast<Real>(total / denom);
}

// ---------------------------------------------------------------------------
// Sequence predictor
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (learning_rate < 0)
    throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1)
    throw ConfigError("batch_size must be >= 1");
  if (num_layers < 1 || hidden_dim < 1)
    throw ConfigError("num_layers and hidden_dim must be >= 1");
  if (epochs_uni < 0 || epochs_bi < 0)
    throw ConfigError("epoch counts must be >= 0");
  if (dropout < 0 || dropout >= 1)
    throw ConfigError("dropout must be in [0, 1)");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
    throw ConfigError("adam betas must be in [0, 1)");
  if (adam_eps <= 0)
    throw ConfigError("adam_eps must be positive");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"num_layers", num_layers},
          {"hidden_dim", hidden_dim},
          {"epochs_uni", epochs_uni},
          {"epochs_bi", epochs_bi},
          {"dropout", dropout},
          {"seed", seed},
          {"clip_norm", clip_norm},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.epochs_uni = j.value("epochs_uni", c.epochs_uni);
  c.epochs_bi = j.value("epochs_bi", c.epochs_bi);
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.validate();
  return c;
}

SequencePredictor::SequencePredictor(int input_dim, int hidden, int layers, Direction dir,
                                     Real dropout_rate, int m, int q, uint64_t init_seed)
    : stack(input_dim, hidden, layers, dir, dropout_rate),
      head("head", stack.rep_dim(), m * q, Activation::linear),
      horizon(m), num_beams(q) {
  if (m < 1 || q < 1)
    throw ConfigError("prediction horizon and beam count must be >= 1");
  Rng rng(init_seed);
  stack.init(rng);
  head.init(rng);
}

std::vector<Param*> SequencePredictor::params() {
  std::vector<Param*> out = stack.params();
  for (Param* p : head.params())
    out.push_back(p);
  return out;
}

std::vector<const Param*> SequencePredictor::params() const {
  auto mutable_params = const_cast<SequencePredictor*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

void SequencePredictor::zero_grads() {
  for (Param* p : params())
    p->zero_grad();
}

Mat SequencePredictor::logits(const std::vector<Mat>& seq, bool train, Rng& rng,
                              StackTrace* trace, Dense::Cache* head_cache) const {
  Mat rep = stack.forward(seq, train, rng, trace);
  return head.forward(rep, head_cache);
}

Real SequencePredictor::loss(const std::vector<Mat>& seq, const std::vector<int>& labels) const {
  Rng unused(0);
  Mat lg = logits(seq, false, unused);
  return softmax_xent(lg, labels, horizon, num_beams);
}

Real SequencePredictor::train_batch(const std::vector<Mat>& seq, const std::vector<int>& labels,
                                    Adam& adam, Real clip_norm, Rng& rng) {
  zero_grads();
  StackTrace trace;
  Dense::Cache head_cache;
  Mat lg = logits(seq, true, rng, &trace, &head_cache);
  Mat dlg;
  Real batch_loss = softmax_xent(lg, labels, horizon, num_beams, &dlg);
  if (!std::isfinite(batch_loss))
    throw TrainingError("non-finite training loss");
  Mat drep = head.backward(dlg, head_cache);
  stack.backward(drep, trace);
  adam.step(params(), clip_norm);
  return batch_loss;
}

std::vector<std::vector<int>> SequencePredictor::predict(const std::vector<Mat>& seq) const {
  Rng unused(0);
  Mat lg = logits(seq, false, unused);
  std::vector<std::vector<int>> out(lg.rows(), std::vector<int>(horizon));
  for (Eigen::Index b = 0; b < lg.rows(); ++b)
    for (int k = 0; k < horizon; ++k) {
      int best = 0;
      Real best_val = lg(b, k * num_beams);
      for (int j = 1; j < num_beams; ++j)
        if (lg(b, k * num_beams + j) > best_val) {
          best_val = lg(b, k * num_beams + j);
          best = j;
        }
      out[b][k] = best;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::vector<Param*>& params,
                           const std::function<Real()>& loss_fn, Rng& rng,
                           size_t min_coords, Real step) {
  size_t total = 0;
  for (const Param* p : params)
    total += static_cast<size_t>(p->value.size());
  if (total == 0)
    throw ContractError("grad_check: no parameters");

  std::set<size_t> picks;
  if (total <= min_coords) {
    for (size_t i = 0; i < total; ++i)
      picks.insert(i);
  } else {
    while (picks.size() < min_coords)
      picks.insert(static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(total) - 1)));
  }

  GradCheckResult res;
  for (size_t flat : picks) {
    size_t off = flat;
    Param* p = nullptr;
    for (Param* cand : params) {
      const size_t n = static_cast<size_t>(cand->value.size());
      if (off < n) {
        p = cand;
        break;
      }
      off -= n;
    }
    Real* coord = p->value.data() + off;
    const Real saved = *coord;
    *coord = saved + step;
    const Real up = loss_fn();
    *coord = saved - step;
    const Real down = loss_fn();
    *coord = saved;

    const Real numeric = (up - down) / (2 * step);
    const Real analytic = p->grad.data()[off];
    const Real denom = std::max({std::abs(numeric), std::abs(analytic), Real(1e-8)});
    const Real rel = std::abs(numeric - analytic) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = p->name + "[" + std::to_string(off) + "]";
    }
    ++res.num_checked;
  }
  return res;
}

}  // namespace beamtrack::nn
