#include "beamtrack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

namespace beamtrack {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

std::string to_string(InputMode m) {
  switch (m) {
    case InputMode::beam_only: return "beam_only";
    case InputMode::staggered: return "staggered";
    case InputMode::concat: return "concat";
  }
  throw ContractError("unknown input mode");
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "beam_only") return InputMode::beam_only;
  if (s == "staggered") return InputMode::staggered;
  if (s == "concat") return InputMode::concat;
  throw ConfigError("unknown input mode '" + s + "'");
}

std::string to_string(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::none: return "none";
    case EmbedderKind::pca: return "pca";
    case EmbedderKind::ae: return "ae";
    case EmbedderKind::cls: return "cls";
  }
  throw ContractError("unknown embedder kind");
}

EmbedderKind embedder_kind_from_string(const std::string& s) {
  if (s == "none") return EmbedderKind::none;
  if (s == "pca") return EmbedderKind::pca;
  if (s == "ae") return EmbedderKind::ae;
  if (s == "cls") return EmbedderKind::cls;
  throw ConfigError("unknown embedder kind '" + s + "'");
}

std::string seq_model_to_string(nn::Direction d) {
  return d == nn::Direction::bidirectional ? "bi_gru" : "uni_gru";
}

nn::Direction seq_model_from_string(const std::string& s) {
  if (s == "uni_gru") return nn::Direction::forward;
  if (s == "bi_gru") return nn::Direction::bidirectional;
  throw ConfigError("unknown sequence model '" + s + "'");
}

void PipelineConfig::validate() const {
  if (tau < 1 || m < 1)
    throw ConfigError("tau and m must be >= 1");
  if (embedding_dim < 0)
    throw ConfigError("embedding_dim must be >= 0");
  if (input_mode == InputMode::staggered && sequence_model != nn::Direction::forward)
    throw ConfigError("staggered input requires the uni_gru sequence model");
  if (input_mode == InputMode::beam_only && embedder != EmbedderKind::none)
    throw ConfigError("beam_only input takes no embedder");
  if (input_mode != InputMode::beam_only && embedder == EmbedderKind::none)
    throw ConfigError("image input modes require an embedder");
  train.validate();
  scoring.validate();
  embedder_opts.validate();
}

int PipelineConfig::resolved_embedding_dim(int beam_dim) const {
  if (input_mode == InputMode::beam_only)
    return 0;
  if (embedding_dim > 0)
    return embedding_dim;
  return input_mode == InputMode::staggered ? beam_dim : 64;
}

int PipelineConfig::input_width(int beam_dim) const {
  return input_mode == InputMode::concat ? beam_dim + resolved_embedding_dim(beam_dim)
                                         : beam_dim;
}

json PipelineConfig::to_json() const {
  return {{"input_mode", to_string(input_mode)},
          {"sequence_model", seq_model_to_string(sequence_model)},
          {"embedder", to_string(embedder)},
          {"embedding_dim", embedding_dim},
          {"tau", tau},
          {"m", m},
          {"train", train.to_json()},
          {"scoring", scoring.to_json()},
          {"embedder_opts", embedder_opts.to_json()}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  if (j.contains("input_mode"))
    c.input_mode = input_mode_from_string(j.at("input_mode").get<std::string>());
  if (j.contains("sequence_model"))
    c.sequence_model = seq_model_from_string(j.at("sequence_model").get<std::string>());
  if (j.contains("embedder"))
    c.embedder = embedder_kind_from_string(j.at("embedder").get<std::string>());
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.tau = j.value("tau", c.tau);
  c.m = j.value("m", c.m);
  if (j.contains("train"))
    c.train = nn::TrainConfig::from_json(j.at("train"));
  if (j.contains("scoring"))
    c.scoring = ScoringConfig::from_json(j.at("scoring"));
  if (j.contains("embedder_opts"))
    c.embedder_opts = EmbedTrainOptions::from_json(j.at("embedder_opts"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model input assembly
// ---------------------------------------------------------------------------

Tensor3 build_sequence_input(const Dataset& ds, const Codebook& cb,
                             const ImageEmbedder* embedder, InputMode mode, int tau) {
  if (tau < 1)
    throw ConfigError("tau must be >= 1");
  if (mode != InputMode::beam_only && !embedder)
    throw ContractError("image input modes require an embedder");
  const int beam_dim = cb.embed_dim();
  if (mode == InputMode::staggered && embedder->dim() != beam_dim)
    throw ConfigError("staggered input needs embedding width " + std::to_string(beam_dim) +
                      " to match the beam embedding; got " + std::to_string(embedder->dim()));
  const int steps = mode == InputMode::staggered ? 2 * tau : tau;
  const int width =
      mode == InputMode::concat ? beam_dim + embedder->dim() : beam_dim;

  Tensor3 out(static_cast<int>(ds.size()), steps, width);
  std::map<std::string, Vec> embed_cache;
  auto embedded = [&](const std::string& id) -> const Vec& {
    auto hit = embed_cache.find(id);
    if (hit != embed_cache.end())
      return hit->second;
    auto fit = ds.feature_store.find(id);
    if (fit == ds.feature_store.end())
      throw DataError("unresolved image ref '" + id + "'");
    return embed_cache.emplace(id, embed_image(*embedder, *fit->second)).first->second;
  };

  for (size_t r = 0; r < ds.records.size(); ++r) {
    const auto& rec = ds.records[r];
    if (static_cast<int>(rec.beams.size()) < tau)
      throw ContractError("record " + std::to_string(r) + " has " +
                          std::to_string(rec.beams.size()) + " observations; tau = " +
                          std::to_string(tau));
    const size_t off = rec.beams.size() - tau;  // keep the most recent tau steps
    for (int i = 0; i < tau; ++i) {
      const int beam = rec.beams[off + i];
      if (beam < 0 || beam >= cb.num_beams())
        throw DataError("beam index " + std::to_string(beam) + " outside codebook range");
      Vec be = embed_beam(cb, beam);
      const int ri = static_cast<int>(r);
      switch (mode) {
        case InputMode::beam_only:
          for (int j = 0; j < beam_dim; ++j)
            out.at(ri, i, j) = be(j);
          break;
        case InputMode::staggered: {
          const Vec& ie = embedded(rec.features[off + i]);
          for (int j = 0; j < beam_dim; ++j) {
            out.at(ri, 2 * i, j) = be(j);
            out.at(ri, 2 * i + 1, j) = ie(j);
          }
          break;
        }
        case InputMode::concat: {
          const Vec& ie = embedded(rec.features[off + i]);
          for (int j = 0; j < beam_dim; ++j)
            out.at(ri, i, j) = be(j);
          for (int j = 0; j < ie.size(); ++j)
            out.at(ri, i, beam_dim + j) = ie(j);
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Mat> tensor_batch(const Tensor3& t, const std::vector<size_t>& rows) {
  std::vector<Mat> seq(t.n1, Mat(static_cast<Eigen::Index>(rows.size()), t.n2));
  for (size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] >= static_cast<size_t>(t.n0))
      throw ContractError("tensor_batch: row index out of range");
    for (int s = 0; s < t.n1; ++s)
      for (int j = 0; j < t.n2; ++j)
        seq[s](static_cast<Eigen::Index>(b), j) = t.at(static_cast<int>(rows[b]), s, j);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<int> gather_labels(const Dataset& ds, const std::vector<size_t>& rows, int m,
                               int num_beams) {
  std::vector<int> labels;
  labels.reserve(rows.size() * m);
  for (size_t r : rows) {
    const auto& rec = ds.records[r];
    if (static_cast<int>(rec.labels.size()) < m)
      throw ContractError("record has fewer than m labels");
    for (int k = 0; k < m; ++k) {
      const int lab = rec.labels[k];
      if (lab < 0 || lab >= num_beams)
        throw DataError("label beam index " + std::to_string(lab) + " outside codebook range");
      labels.push_back(lab);
    }
  }
  return labels;
}

std::unique_ptr<ImageEmbedder> fit_embedder(const Dataset& train, const Codebook& cb,
                                            const PipelineConfig& cfg) {
  if (cfg.embedder == EmbedderKind::none)
    return nullptr;
  if (train.feature_store.empty())
    throw DataError("no training images available for embedder fitting");

  const Eigen::Index d = static_cast<Eigen::Index>(train.feature_store.begin()->second->size());
  Mat X(static_cast<Eigen::Index>(train.feature_store.size()), d);
  std::vector<std::string> ids;
  ids.reserve(train.feature_store.size());
  Eigen::Index row = 0;
  for (const auto& [id, fm] : train.feature_store) {
    if (static_cast<Eigen::Index>(fm->size()) != d)
      throw DataError("feature maps with inconsistent dimensions in '" + train.name + "'");
    X.row(row++) = fm->flatten().transpose();
    ids.push_back(id);
  }

  const int k = cfg.resolved_embedding_dim(cb.embed_dim());
  EmbedTrainOptions opts = cfg.embedder_opts;
  opts.seed = Rng::mix(cfg.train.seed, 2);

  switch (cfg.embedder) {
    case EmbedderKind::pca:
      return make_pca_embedder(pca_fit(X, k));
    case EmbedderKind::ae:
      return make_ae_embedder(ae_train(X, k, opts));
    case EmbedderKind::cls: {
      std::map<std::string, std::set<int>> sets;
      for (const auto& rec : train.records)
        for (size_t i = 0; i < rec.features.size(); ++i)
          sets[rec.features[i]].insert(rec.beams[i]);
      std::vector<std::vector<int>> beam_sets;
      beam_sets.reserve(ids.size());
      for (const auto& id : ids) {
        auto it = sets.find(id);
        beam_sets.emplace_back(it == sets.end() ? std::vector<int>{}
                                                : std::vector<int>(it->second.begin(),
                                                                   it->second.end()));
      }
      return make_cls_embedder(cls_train(X, beam_sets, cb.num_beams(), k, opts));
    }
    case EmbedderKind::none:
      break;
  }
  return nullptr;
}

void check_shapes(const Dataset& ds, const PipelineConfig& cfg, const char* what) {
  if (ds.empty())
    throw DataError(std::string(what) + " dataset is empty");
  if (ds.tau() < cfg.tau)
    throw ConfigError(std::string(what) + " records provide " + std::to_string(ds.tau()) +
                      " observations; tau = " + std::to_string(cfg.tau));
  if (ds.m() < cfg.m)
    throw ConfigError(std::string(what) + " records provide " + std::to_string(ds.m()) +
                      " labels; horizon m = " + std::to_string(cfg.m));
}

int planned_epochs(const PipelineConfig& cfg) {
  return cfg.sequence_model == nn::Direction::bidirectional ? cfg.train.epochs_bi
                                                            : cfg.train.epochs_uni;
}

void fit_epochs(TrainedPredictor& model, const Dataset& train, const Tensor3& inputs,
                nn::Adam& adam, Rng& data_rng, int start_epoch, CheckpointSink* sink) {
  const auto& tc = model.config.train;
  const int total = planned_epochs(model.config);
  const size_t n = train.size();
  for (int epoch = start_epoch; epoch < total; ++epoch) {
    auto order = shuffled_indices(n, data_rng);
    double loss_sum = 0.0;
    size_t batches = 0;
    for (size_t lo = 0; lo < n; lo += tc.batch_size) {
      const size_t hi = std::min(n, lo + tc.batch_size);
      std::vector<size_t> rows(order.begin() + lo, order.begin() + hi);
      auto seq = tensor_batch(inputs, rows);
      auto labels = gather_labels(train, rows, model.config.m, model.net.num_beams);
      loss_sum += model.net.train_batch(seq, labels, adam, tc.clip_norm, data_rng);
      ++batches;
    }
    model.epoch_losses.push_back(static_cast<Real>(loss_sum / std::max<size_t>(batches, 1)));
    if (sink)
      sink->on_epoch(model, adam, data_rng, epoch + 1);
  }
}

}  // namespace

TrainedPredictor train_predictor(const Dataset& train, const Codebook& cb,
                                 const PipelineConfig& cfg, CheckpointSink* sink) {
  cfg.validate();
  train.validate();
  check_shapes(train, cfg, "training");

  TrainedPredictor model;
  model.config = cfg;
  model.codebook_config = cb.config;
  model.codebook = cb;
  model.embedder = fit_embedder(train, cb, cfg);
  if (model.embedder)
    model.train_image_ids = train.image_ids();

  model.net = nn::SequencePredictor(cfg.input_width(cb.embed_dim()), cfg.train.hidden_dim,
                                    cfg.train.num_layers, cfg.sequence_model,
                                    cfg.train.dropout, cfg.m, cb.num_beams(),
                                    Rng::mix(cfg.train.seed, 0));

  Tensor3 inputs =
      build_sequence_input(train, cb, model.embedder.get(), cfg.input_mode, cfg.tau);
  nn::Adam adam{{cfg.train.learning_rate, cfg.train.adam_beta1, cfg.train.adam_beta2,
                 cfg.train.adam_eps}};
  Rng data_rng(Rng::mix(cfg.train.seed, 1));
  fit_epochs(model, train, inputs, adam, data_rng, 0, sink);
  return model;
}

Predictions predict(const TrainedPredictor& model, const Dataset& ds) {
  ds.validate();
  if (ds.empty())
    return {};
  if (ds.tau() < model.config.tau)
    throw ContractError("records provide " + std::to_string(ds.tau()) +
                        " observations; model tau = " + std::to_string(model.config.tau));
  Tensor3 inputs = build_sequence_input(ds, model.codebook, model.embedder.get(),
                                        model.config.input_mode, model.config.tau);
  Predictions out;
  out.reserve(ds.size());
  const size_t chunk = static_cast<size_t>(std::max(model.config.train.batch_size, 1));
  for (size_t lo = 0; lo < ds.size(); lo += chunk) {
    const size_t hi = std::min(ds.size(), lo + chunk);
    std::vector<size_t> rows(hi - lo);
    std::iota(rows.begin(), rows.end(), lo);
    auto preds = model.net.predict(tensor_batch(inputs, rows));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

ScoreReport score_predictions(const Predictions& preds, const Dataset& ds,
                              const ScoringConfig& scoring) {
  std::vector<std::vector<int>> truths;
  truths.reserve(ds.size());
  for (const auto& rec : ds.records)
    truths.push_back(rec.labels);
  return make_score_report(preds, truths, scoring);
}

ScoreReport evaluate(const TrainedPredictor& model, const Dataset& val) {
  val.validate();
  if (!model.train_image_ids.empty()) {
    auto val_ids = val.image_ids();
    std::vector<std::string> shared;
    std::set_intersection(model.train_image_ids.begin(), model.train_image_ids.end(),
                          val_ids.begin(), val_ids.end(), std::back_inserter(shared));
    if (!shared.empty()) {
      std::string msg = "validation images overlap the training images: ";
      const size_t show = std::min<size_t>(shared.size(), 10);
      for (size_t i = 0; i < show; ++i)
        msg += (i ? ", " : "") + shared[i];
      if (shared.size() > show)
        msg += ", ... (" + std::to_string(shared.size()) + " total)";
      throw DataError(msg);
    }
  }
  return score_predictions(predict(model, val), val, model.config.scoring);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TrainedPredictor& model,
                     const nn::Adam& adam, const Rng& data_rng, int next_epoch) {
  json meta;
  meta["kind"] = "checkpoint";
  meta["format_version"] = 1;
  meta["pipeline_config"] = model.config.to_json();
  meta["codebook_config"] = model.codebook_config.to_json();
  meta["next_epoch"] = next_epoch;
  meta["epoch_losses"] = model.epoch_losses;
  meta["adam_step"] = adam.step_count;
  meta["rng_state"] = data_rng.state();
  meta["train_image_ids"] = model.train_image_ids;

  std::vector<double> payload;
  if (model.embedder) {
    json em;
    model.embedder->save(em, payload);
    meta["embedder"] = em;
  } else {
    meta["embedder"] = nullptr;
  }
  meta["embedder_payload_len"] = payload.size();

  json tensors = json::array();
  auto record = [&](const std::string& name, const Mat& m) {
    tensors.push_back({{"name", name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", payload.size()}});
    pack_mat(payload, m);
  };
  for (const nn::Param* p : model.net.params()) {
    record(p->name, p->value);
    record("adam.m." + p->name, p->adam_m);
    record("adam.v." + p->name, p->adam_v);
  }
  meta["tensors"] = std::move(tensors);
  write_blob(path, meta, payload);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  BlobFile blob;
  try {
    blob = read_blob(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  const json& meta = blob.meta;
  if (meta.value("kind", "") != "checkpoint")
    throw CheckpointError("not a checkpoint file: " + path.string());

  LoadedCheckpoint state;
  try {
    state.model.config = PipelineConfig::from_json(meta.at("pipeline_config"));
    state.model.codebook_config = CodebookConfig::from_json(meta.at("codebook_config"));
    state.next_epoch = meta.at("next_epoch").get<int>();
    state.model.epoch_losses = meta.at("epoch_losses").get<std::vector<Real>>();
    state.model.train_image_ids =
        meta.at("train_image_ids").get<std::set<std::string>>();
    state.adam.step_count = meta.at("adam_step").get<long>();
    state.data_rng.set_state(meta.at("rng_state").get<std::string>());
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint metadata: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CheckpointError("invalid config in checkpoint: " + std::string(e.what()));
  }

  const PipelineConfig& cfg = state.model.config;
  state.model.codebook = generate_codebook(state.model.codebook_config);
  state.adam.cfg = {cfg.train.learning_rate, cfg.train.adam_beta1, cfg.train.adam_beta2,
                    cfg.train.adam_eps};

  size_t pos = 0;
  if (!meta.at("embedder").is_null()) {
    state.model.embedder = load_embedder(meta.at("embedder"), blob.payload, pos);
    if (pos != meta.at("embedder_payload_len").get<size_t>())
      throw CheckpointError("embedder payload length mismatch");
  }

  state.model.net = nn::SequencePredictor(
      cfg.input_width(state.model.codebook.embed_dim()), cfg.train.hidden_dim,
      cfg.train.num_layers, cfg.sequence_model, cfg.train.dropout, cfg.m,
      state.model.codebook.num_beams(), Rng::mix(cfg.train.seed, 0));

  struct Entry {
    Eigen::Index rows, cols;
    size_t offset;
    bool consumed = false;
  };
  std::map<std::string, Entry> directory;
  for (const auto& tj : meta.at("tensors"))
    directory[tj.at("name").get<std::string>()] = {
        tj.at("rows").get<Eigen::Index>(), tj.at("cols").get<Eigen::Index>(),
        tj.at("offset").get<size_t>()};

  auto fetch = [&](const std::string& name, Mat& dst) {
    auto it = directory.find(name);
    if (it == directory.end())
      throw CheckpointError("missing tensor '" + name + "'");
    Entry& e = it->second;
    if (e.rows != dst.rows() || e.cols != dst.cols())
      throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(e.rows) +
                            "x" + std::to_string(e.cols) + "; expected " +
                            std::to_string(dst.rows()) + "x" + std::to_string(dst.cols()));
    size_t p = e.offset;
    dst = unpack_mat(blob.payload, p, e.rows, e.cols);
    e.consumed = true;
  };
  for (nn::Param* p : state.model.net.params()) {
    fetch(p->name, p->value);
    fetch("adam.m." + p->name, p->adam_m);
    fetch("adam.v." + p->name, p->adam_v);
  }
  for (const auto& [name, entry] : directory)
    if (!entry.consumed)
      throw CheckpointError("unknown tensor name '" + name + "'");
  return state;
}

TrainedPredictor resume_training(LoadedCheckpoint state, const Dataset& train,
                                 const Codebook& cb, CheckpointSink* sink) {
  if (config_hash(cb.config.to_json()) !=
      config_hash(state.model.codebook_config.to_json()))
    throw CheckpointError("checkpoint was trained against a different codebook config");
  train.validate();
  check_shapes(train, state.model.config, "training");

  TrainedPredictor model = std::move(state.model);
  Tensor3 inputs = build_sequence_input(train, cb, model.embedder.get(),
                                        model.config.input_mode, model.config.tau);
  fit_epochs(model, train, inputs, state.adam, state.data_rng, state.next_epoch, sink);
  return model;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

std::vector<SweepRow> run_memory_sweep(const Dataset& train, const Dataset& val,
                                       const Codebook& cb, const PipelineConfig& base,
                                       const std::vector<int>& taus) {
  if (taus.empty())
    throw ConfigError("memory sweep needs at least one tau");
  std::vector<SweepRow> rows;
  for (int tau : taus) {
    if (tau < 1 || tau > train.tau() || tau > val.tau())
      throw ConfigError("sweep tau " + std::to_string(tau) +
                        " exceeds the available observation history");
    PipelineConfig cfg = base;
    cfg.tau = tau;
    TrainedPredictor model = train_predictor(train, cb, cfg);
    rows.push_back({tau, evaluate(model, val)});
  }
  return rows;
}

ExperimentPlan ExperimentPlan::default_plan() {
  ExperimentPlan p;
  p.rows = {{{'A'}, 'A'},           {{'A', 'B', 'C'}, 'A'}, {{'B'}, 'B'},
            {{'A', 'B'}, 'B'},      {{'A', 'B', 'C'}, 'B'}, {{'C'}, 'C'},
            {{'B', 'C'}, 'C'},      {{'A', 'B', 'C'}, 'C'}};
  return p;
}

namespace {

std::string clusters_to_string(const std::vector<char>& cs) {
  return std::string(cs.begin(), cs.end());
}

std::vector<char> clusters_from_string(std::string s) {
  if (s == "D")
    s = "ABC";  // D is the full training set
  std::vector<char> out;
  for (char c : s) {
    if (c != 'A' && c != 'B' && c != 'C')
      throw ConfigError("unresolvable cluster expression '" + s + "'");
    if (std::find(out.begin(), out.end(), c) == out.end())
      out.push_back(c);
  }
  if (out.empty())
    throw ConfigError("empty cluster expression");
  std::sort(out.begin(), out.end());
  return out;
}

std::string row_name(const ExperimentPlanRow& row) {
  return clusters_to_string(row.train_clusters) + "->" + std::string(1, row.val_cluster);
}

}  // namespace

json ExperimentPlan::to_json() const {
  json rs = json::array();
  for (const auto& row : rows)
    rs.push_back({{"train", clusters_to_string(row.train_clusters)},
                  {"val", std::string(1, row.val_cluster)}});
  json ms = json::array();
  for (InputMode m : modes)
    ms.push_back(to_string(m));
  return {{"rows", rs}, {"modes", ms}};
}

ExperimentPlan ExperimentPlan::from_json(const json& j) {
  ExperimentPlan p;
  if (j.contains("rows")) {
    p.rows.clear();
    for (const auto& rj : j.at("rows")) {
      ExperimentPlanRow row;
      row.train_clusters = clusters_from_string(rj.at("train").get<std::string>());
      const std::string v = rj.at("val").get<std::string>();
      if (v.size() != 1 || (v[0] != 'A' && v[0] != 'B' && v[0] != 'C'))
        throw ConfigError("validation cluster must be one of A, B, C");
      row.val_cluster = v[0];
      p.rows.push_back(std::move(row));
    }
  }
  if (j.contains("modes")) {
    p.modes.clear();
    for (const auto& mj : j.at("modes"))
      p.modes.push_back(input_mode_from_string(mj.get<std::string>()));
  }
  if (p.rows.empty() || p.modes.empty())
    throw ConfigError("experiment plan needs at least one row and one mode");
  return p;
}

json ClusterExperimentResult::to_json() const {
  json cs = json::array();
  for (const auto& cell : cells)
    cs.push_back({{"row", cell.row_name},
                  {"mode", to_string(cell.mode)},
                  {"score_5", cell.score_5},
                  {"report", cell.full.to_json()},
                  {"train_size", cell.train_size},
                  {"val_size", cell.val_size}});
  return {{"cells", cs}, {"weighted", weighted}};
}

std::string ClusterExperimentResult::render_table() const {
  std::vector<std::string> row_names;
  std::vector<InputMode> modes;
  for (const auto& cell : cells) {
    if (row_names.empty() || row_names.back() != cell.row_name)
      row_names.push_back(cell.row_name);
    if (std::find(modes.begin(), modes.end(), cell.mode) == modes.end())
      modes.push_back(cell.mode);
  }
  std::string out = "train->val";
  for (InputMode m : modes)
    out += " | " + to_string(m);
  out += "\n";
  for (const auto& name : row_names) {
    out += name;
    for (InputMode m : modes)
      for (const auto& cell : cells)
        if (cell.row_name == name && cell.mode == m) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), " | %.3f", static_cast<double>(cell.score_5));
          out += buf;
        }
    out += "\n";
  }
  return out;
}

ClusterExperimentResult run_cluster_experiment(const Dataset& train, const Dataset& val,
                                               const Codebook& cb, const PipelineConfig& base,
                                               const ClusterExperimentConfig& exp) {
  if (exp.plan.rows.empty() || exp.plan.modes.empty())
    throw ConfigError("experiment plan needs at least one row and one mode");
  exp.thresholds.validate();

  StdClusters tr = cluster_by_std(train, exp.thresholds);
  StdClusters va = cluster_by_std(val, exp.thresholds);
  auto pick = [](const StdClusters& cs, char which) -> const Dataset& {
    switch (which) {
      case 'A': return cs.a;
      case 'B': return cs.b;
      case 'C': return cs.c;
    }
    throw ContractError("unknown cluster");
  };

  struct Task {
    size_t row_index;
    InputMode mode;
    Dataset train_set;
    const Dataset* val_set;
  };
  std::vector<Task> tasks;
  for (size_t r = 0; r < exp.plan.rows.size(); ++r) {
    const auto& row = exp.plan.rows[r];
    std::vector<const Dataset*> parts;
    for (char c : row.train_clusters)
      parts.push_back(&pick(tr, c));
    Dataset subset = union_datasets(parts, clusters_to_string(row.train_clusters) + "_t");
    if (subset.empty())
      throw DataError("plan row " + row_name(row) + " resolves to an empty training subset");
    const Dataset& vset = pick(va, row.val_cluster);
    if (vset.empty())
      throw DataError("plan row " + row_name(row) + " has an empty validation cluster");
    for (InputMode mode : exp.plan.modes)
      tasks.push_back({r, mode, subset, &vset});
  }

  std::vector<ClusterCell> cells(tasks.size());
  std::vector<std::exception_ptr> failures(tasks.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size())
        return;
      try {
        const Task& task = tasks[i];
        const auto& row = exp.plan.rows[task.row_index];
        PipelineConfig cfg = base;
        cfg.input_mode = task.mode;
        if (task.mode == InputMode::beam_only)
          cfg.embedder = EmbedderKind::none;
        else if (cfg.embedder == EmbedderKind::none)
          cfg.embedder = EmbedderKind::ae;
        if (task.mode == InputMode::staggered)
          cfg.sequence_model = nn::Direction::forward;
        cfg.train.seed = Rng::mix(exp.base_seed, task.row_index);
        TrainedPredictor model = train_predictor(task.train_set, cb, cfg);
        ScoreReport report = evaluate(model, *task.val_set);
        cells[i] = {row_name(row), task.mode,    report.score_5,
                    report,        task.train_set.size(), task.val_set->size()};
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };

  const int nthreads = std::max(1, std::min<int>(exp.workers, static_cast<int>(tasks.size())));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i)
      pool.emplace_back(worker);
    for (auto& th : pool)
      th.join();
  }
  for (const auto& f : failures)
    if (f)
      std::rethrow_exception(f);

  ClusterExperimentResult result;
  result.cells = std::move(cells);

  // Cardinality-weighted aggregates over the non-empty validation clusters.
  std::vector<char> val_present;
  for (char c : {'A', 'B', 'C'})
    if (!pick(va, c).empty())
      val_present.push_back(c);
  auto aggregate = [&](InputMode mode, auto row_matches) -> json {
    std::vector<Real> scores;
    std::vector<size_t> cards;
    for (char c : val_present) {
      bool found = false;
      for (size_t r = 0; r < exp.plan.rows.size() && !found; ++r) {
        const auto& row = exp.plan.rows[r];
        if (row.val_cluster != c || !row_matches(row))
          continue;
        for (const auto& cell : result.cells)
          if (cell.row_name == row_name(row) && cell.mode == mode) {
            scores.push_back(cell.score_5);
            cards.push_back(pick(va, c).size());
            found = true;
            break;
          }
      }
      if (!found)
        return nullptr;  // plan does not cover this validation cluster
    }
    return weighted_cluster_score(scores, cards);
  };
  result.weighted = json::object();
  for (InputMode mode : exp.plan.modes) {
    json entry = json::object();
    json matched = aggregate(mode, [](const ExperimentPlanRow& row) {
      return row.train_clusters.size() == 1 && row.train_clusters[0] == row.val_cluster;
    });
    json full = aggregate(mode, [](const ExperimentPlanRow& row) {
      return row.train_clusters == std::vector<char>{'A', 'B', 'C'};
    });
    if (!matched.is_null())
      entry["matched"] = matched;
    if (!full.is_null())
      entry["full_data"] = full;
    result.weighted[to_string(mode)] = std::move(entry);
  }
  return result;
}

}  // namespace beamtrack
