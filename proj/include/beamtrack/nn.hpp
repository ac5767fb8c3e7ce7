#pragma once

#include <functional>
#include <string>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/io.hpp"
#include "beamtrack/rng.hpp"

namespace beamtrack::nn {

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

struct Param {
  std::string name;
  Mat value, grad, adam_m, adam_v;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)),
        value(Mat::Zero(rows, cols)),
        grad(Mat::Zero(rows, cols)),
        adam_m(Mat::Zero(rows, cols)),
        adam_v(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  void init_uniform(Rng& rng, int fan_in);
};

Real global_grad_norm(const std::vector<Param*>& params);

// Rescales gradients in place when their global norm exceeds clip_norm
// (disabled when clip_norm <= 0). Returns the pre-clip norm.
Real clip_gradients(const std::vector<Param*>& params, Real clip_norm);

struct AdamConfig {
  Real lr = 0.001;
  Real beta1 = 0.9, beta2 = 0.999;
  Real eps = 1e-8;
};

struct Adam {
  AdamConfig cfg;
  long step_count = 0;

  void step(const std::vector<Param*>& params, Real clip_norm);
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

enum class Activation { linear, relu, tanh, sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Dense {
  Param W;  // out x in
  Param b;  // 1 x out
  Activation act = Activation::linear;

  struct Cache {
    Mat x, out;
  };

  Dense() = default;
  Dense(const std::string& prefix, int in, int out, Activation a);

  void init(Rng& rng);
  int in_dim() const { return static_cast<int>(W.value.cols()); }
  int out_dim() const { return static_cast<int>(W.value.rows()); }

  Mat forward(const Mat& x, Cache* cache = nullptr) const;  // x: B x in
  Mat backward(const Mat& dout, const Cache& cache);        // returns dx
  std::vector<Param*> params();
};

// Gate convention: z and r from sigmoid, candidate from tanh over the
// reset-gated state, new state h' = (1 - z) . h + z . h_candidate.
struct GruLayerParams {
  Param Wz, Wr, Wh;  // hidden x in
  Param Uz, Ur, Uh;  // hidden x hidden
  Param bz, br, bh;  // 1 x hidden

  GruLayerParams() = default;
  GruLayerParams(const std::string& prefix, int in, int hidden);

  void init(Rng& rng);
  int hidden() const { return static_cast<int>(Uz.value.rows()); }
  int input() const { return static_cast<int>(Wz.value.cols()); }
  std::vector<Param*> params();
};

// Reference single-vector cell update.
Vec gru_cell_forward(const GruLayerParams& p, const Vec& x, const Vec& h);

struct GruStepCache {
  Mat z, r, hc, rh;
};

// Batched cell update; rows are batch entries.
Mat gru_step(const GruLayerParams& p, const Mat& x, const Mat& h_prev,
             GruStepCache* cache = nullptr);

// Backprop through one cell update. g is the gradient on the new state;
// accumulates parameter grads, assigns dx, returns dh_prev.
Mat gru_step_backward(GruLayerParams& p, const Mat& g, const Mat& x, const Mat& h_prev,
                      const GruStepCache& cache, Mat& dx);

enum class Direction { forward, bidirectional };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct LayerDirCache {
  std::vector<Mat> hs;               // processing order, size T+1, hs[0] = 0
  std::vector<GruStepCache> steps;   // size T
};

struct StackTrace {
  std::vector<std::vector<Mat>> layer_inputs;   // per layer, logical order
  std::vector<LayerDirCache> fw, bw;
  std::vector<std::vector<Mat>> dropout_masks;  // per layer boundary, per step
};

// Stacked GRU; inverted dropout between layers during training only. The
// sequence representation is the top layer's last forward state, with the
// backward direction's first-step state appended when bidirectional.
struct GruStack {
  std::vector<GruLayerParams> fwd, bwd;  // bwd empty when unidirectional
  Direction direction = Direction::forward;
  Real dropout = 0.0;
  int input_dim = 0, hidden_dim = 0;

  GruStack() = default;
  GruStack(int input, int hidden, int layers, Direction dir, Real dropout_rate);

  void init(Rng& rng);
  int num_layers() const { return static_cast<int>(fwd.size()); }
  int rep_dim() const {
    return direction == Direction::bidirectional ? 2 * hidden_dim : hidden_dim;
  }

  // seq: T matrices of B x input_dim. Returns B x rep_dim.
  Mat forward(const std::vector<Mat>& seq, bool train, Rng& rng,
              StackTrace* trace = nullptr) const;
  void backward(const Mat& drep, StackTrace& trace);
  std::vector<Param*> params();
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean softmax cross-entropy for one instance: logits are m x Q, one label
// per row.
Real cross_entropy(const Mat& logits, const std::vector<int>& labels);

// Batched variant over B x (m*Q) logits with row-major (b, k) label order.
// Optionally writes d(loss)/d(logits).
Real softmax_xent(const Mat& logits, const std::vector<int>& labels, int m, int q,
                  Mat* dlogits = nullptr);

// ---------------------------------------------------------------------------
// Sequence predictor
// ---------------------------------------------------------------------------

struct TrainConfig {
  Real learning_rate = 0.001;
  int batch_size = 1000;
  int num_layers = 4;
  int hidden_dim = 256;
  int epochs_uni = 12;
  int epochs_bi = 50;
  Real dropout = 0.2;
  uint64_t seed = 1;
  Real clip_norm = 5.0;  // <= 0 disables clipping
  Real adam_beta1 = 0.9, adam_beta2 = 0.999;
  Real adam_eps = 1e-8;

  void validate() const;
  json to_json() const;
  static TrainConfig from_json(const json& j);
};

// GRU stack plus a dense head emitting m * Q logits (reshaped m x Q row-major
// per instance).
struct SequencePredictor {
  GruStack stack;
  Dense head;
  int horizon = 0;
  int num_beams = 0;

  SequencePredictor() = default;
  SequencePredictor(int input_dim, int hidden, int layers, Direction dir, Real dropout_rate,
                    int m, int q, uint64_t init_seed);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void zero_grads();

  Mat logits(const std::vector<Mat>& seq, bool train, Rng& rng, StackTrace* trace = nullptr,
             Dense::Cache* head_cache = nullptr) const;
  Real loss(const std::vector<Mat>& seq, const std::vector<int>& labels) const;
  Real train_batch(const std::vector<Mat>& seq, const std::vector<int>& labels, Adam& adam,
                   Real clip_norm, Rng& rng);
  // Per-instance argmax beams, ties to the lowest index: [B][m].
  std::vector<std::vector<int>> predict(const std::vector<Mat>& seq) const;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check
// ---------------------------------------------------------------------------

struct GradCheckResult {
  Real max_rel_err = 0;
  std::string worst_coord;
  size_t num_checked = 0;
};

// Central differences against the analytic gradients already stored in each
// param's grad. loss_fn must re-evaluate the loss at the current parameter
// values (deterministically). Checks all coordinates when there are at most
// min_coords, otherwise a random sample of min_coords distinct ones.
GradCheckResult grad_check(const std::vector<Param*>& params,
                           const std::function<Real()>& loss_fn, Rng& rng,
                           size_t min_coords = 200, Real step = 1e-5);

}  // namespace beamtrack::nn
