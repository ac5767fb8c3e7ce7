#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "beamtrack/baselines.hpp"
#include "beamtrack/codebook.hpp"
#include "beamtrack/common.hpp"
#include "beamtrack/dataset.hpp"
#include "beamtrack/embedding.hpp"
#include "beamtrack/metrics.hpp"
#include "beamtrack/nn.hpp"

namespace beamtrack {

enum class InputMode { beam_only, staggered, concat };
enum class EmbedderKind { none, pca, ae, cls };

std::string to_string(InputMode m);
InputMode input_mode_from_string(const std::string& s);
std::string to_string(EmbedderKind k);
EmbedderKind embedder_kind_from_string(const std::string& s);
std::string seq_model_to_string(nn::Direction d);  // "uni_gru" / "bi_gru"
nn::Direction seq_model_from_string(const std::string& s);

struct PipelineConfig {
  InputMode input_mode = InputMode::staggered;
  nn::Direction sequence_model = nn::Direction::forward;
  EmbedderKind embedder = EmbedderKind::ae;
  int embedding_dim = 0;  // 0 resolves to the mode default (staggered: 2N, concat: 64)
  int tau = 8;
  int m = 5;
  nn::TrainConfig train;
  ScoringConfig scoring;
  EmbedTrainOptions embedder_opts;

  // Rules: staggered requires uni_gru; beam_only requires embedder none and
  // the image modes require an embedder.
  void validate() const;
  int resolved_embedding_dim(int beam_dim) const;
  int input_width(int beam_dim) const;
  int num_steps() const { return input_mode == InputMode::staggered ? 2 * tau : tau; }

  json to_json() const;
  static PipelineConfig from_json(const json& j);
};

// Per-record model input: records x steps x width. Records with longer
// observation histories than cfg.tau contribute their most recent tau steps.
Tensor3 build_sequence_input(const Dataset& ds, const Codebook& cb,
                             const ImageEmbedder* embedder, InputMode mode, int tau);

// Slices selected records of a Tensor3 into the step-major layout the GRU
// stack consumes: steps matrices of |rows| x width.
std::vector<Mat> tensor_batch(const Tensor3& t, const std::vector<size_t>& rows);

struct TrainedPredictor {
  PipelineConfig config;
  CodebookConfig codebook_config;
  Codebook codebook;  // regenerable from the config; kept for self-contained predict
  std::unique_ptr<ImageEmbedder> embedder;  // null for beam_only
  nn::SequencePredictor net;
  std::set<std::string> train_image_ids;  // empty when no images were consumed
  std::vector<Real> epoch_losses;
};

// Receives resumable state after every completed epoch.
class CheckpointSink {
 public:
  virtual ~CheckpointSink() = default;
  virtual void on_epoch(const TrainedPredictor& model, const nn::Adam& adam,
                        const Rng& data_rng, int next_epoch) = 0;
};

TrainedPredictor train_predictor(const Dataset& train, const Codebook& cb,
                                 const PipelineConfig& cfg, CheckpointSink* sink = nullptr);

// Argmax beam indices for every record, [record][m].
Predictions predict(const TrainedPredictor& model, const Dataset& ds);

ScoreReport score_predictions(const Predictions& preds, const Dataset& ds,
                              const ScoringConfig& scoring);

// Validates the image-disjointness guard, then predicts and scores.
ScoreReport evaluate(const TrainedPredictor& model, const Dataset& val);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TrainedPredictor& model,
                     const nn::Adam& adam, const Rng& data_rng, int next_epoch);

struct LoadedCheckpoint {
  TrainedPredictor model;
  nn::Adam adam;
  Rng data_rng;
  int next_epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Continues an interrupted training run; bit-exact with the uninterrupted
// run given the same dataset and codebook.
TrainedPredictor resume_training(LoadedCheckpoint state, const Dataset& train,
                                 const Codebook& cb, CheckpointSink* sink = nullptr);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct SweepRow {
  int tau = 0;
  ScoreReport report;
};

// Trains one model per tau (observations truncated to the most recent tau
// steps) and evaluates each on val.
std::vector<SweepRow> run_memory_sweep(const Dataset& train, const Dataset& val,
                                       const Codebook& cb, const PipelineConfig& base,
                                       const std::vector<int>& taus);

struct ExperimentPlanRow {
  std::vector<char> train_clusters;  // subset of {'A','B','C'}; ABC = everything
  char val_cluster = 'A';
};

struct ExperimentPlan {
  std::vector<ExperimentPlanRow> rows;
  std::vector<InputMode> modes = {InputMode::beam_only, InputMode::concat};

  static ExperimentPlan default_plan();  // the 8-row cluster-conditioning table
  json to_json() const;
  static ExperimentPlan from_json(const json& j);
};

struct ClusterExperimentConfig {
  ExperimentPlan plan = ExperimentPlan::default_plan();
  ClusterConfig thresholds;
  uint64_t base_seed = 1;  // row seed = mix(base_seed, row_index), shared across modes
  int workers = 1;
};

struct ClusterCell {
  std::string row_name;  // e.g. "AB->B"
  InputMode mode = InputMode::beam_only;
  Real score_5 = 0;
  ScoreReport full;
  size_t train_size = 0, val_size = 0;
};

struct ClusterExperimentResult {
  std::vector<ClusterCell> cells;  // plan-row major, then mode order
  // Cardinality-weighted aggregates per mode: "matched" uses rows X->X,
  // "full_data" uses rows ABC->X; each present only when the plan covers all
  // non-empty validation clusters.
  json weighted;
  json to_json() const;
  std::string render_table() const;
};

ClusterExperimentResult run_cluster_experiment(const Dataset& train, const Dataset& val,
                                               const Codebook& cb, const PipelineConfig& base,
                                               const ClusterExperimentConfig& exp);

}  // namespace beamtrack
