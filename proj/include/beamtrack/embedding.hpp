#pragma once

#include <memory>
#include <string>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/feature_map.hpp"
#include "beamtrack/io.hpp"
#include "beamtrack/nn.hpp"

namespace beamtrack {

// ---------------------------------------------------------------------------
// PCA (SVD of the centered data matrix)
// ---------------------------------------------------------------------------

struct PcaModel {
  Vec mean;                 // d
  Mat components;           // k x d, orthonormal rows
  Vec explained_variance;   // k, population convention (s_i^2 / n)

  int in_dim() const { return static_cast<int>(components.cols()); }
  int out_dim() const { return static_cast<int>(components.rows()); }
};

// Rows of X are observations. Requires 1 <= k <= min(n, d). Component signs
// are fixed so each row's largest-magnitude entry is positive.
PcaModel pca_fit(const Mat& X, int k);

Vec pca_embed(const PcaModel& model, const Vec& x);
Mat pca_embed_batch(const PcaModel& model, const Mat& X);
Vec pca_reconstruct(const PcaModel& model, const Vec& z);

// ---------------------------------------------------------------------------
// Trained embedders
// ---------------------------------------------------------------------------

struct EmbedTrainOptions {
  int hidden = 512;
  int epochs = 30;
  Real learning_rate = 1e-3;
  int batch_size = 128;
  nn::Activation activation = nn::Activation::relu;  // hidden layers
  uint64_t seed = 1;
  Real clip_norm = 5.0;

  void validate() const;
  json to_json() const;
  static EmbedTrainOptions from_json(const json& j);
};

// Dense autoencoder d -> hidden -> k -> hidden -> d trained on MSE.
struct AeModel {
  nn::Dense enc1, enc2, dec1, dec2;
  std::vector<Real> epoch_losses;

  int in_dim() const { return enc1.in_dim(); }
  int bottleneck() const { return enc2.out_dim(); }
  Mat encode(const Mat& X) const;
  Mat decode(const Mat& Z) const;
  Mat reconstruct(const Mat& X) const { return decode(encode(X)); }
};

AeModel ae_train(const Mat& X, int k, const EmbedTrainOptions& opts);

// Dense classifier d -> hidden -> k -> Q trained with multi-label BCE; the
// k-dim penultimate layer is the embedding.
struct ClsModel {
  nn::Dense l1, l2, out;
  std::vector<Real> epoch_losses;

  int in_dim() const { return l1.in_dim(); }
  int bottleneck() const { return l2.out_dim(); }
  int num_beams() const { return out.out_dim(); }
  Mat embed_batch(const Mat& X) const;
  Mat logits(const Mat& X) const;
};

// beam_sets[i] lists the beam indices associated with row i of X (multi-hot
// targets).
ClsModel cls_train(const Mat& X, const std::vector<std::vector<int>>& beam_sets,
                   int num_beams, int k, const EmbedTrainOptions& opts);

// ---------------------------------------------------------------------------
// Uniform interface used by the prediction pipeline
// ---------------------------------------------------------------------------

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual std::string kind() const = 0;
  virtual int in_dim() const = 0;
  virtual int dim() const = 0;
  virtual Vec embed_flat(const Vec& x) const = 0;
  // Appends tensors to payload and records shapes/settings in meta.
  virtual void save(json& meta, std::vector<double>& payload) const = 0;
};

Vec embed_image(const ImageEmbedder& embedder, const FeatureMap& fm);

std::unique_ptr<ImageEmbedder> make_pca_embedder(PcaModel model);
std::unique_ptr<ImageEmbedder> make_ae_embedder(AeModel model);
std::unique_ptr<ImageEmbedder> make_cls_embedder(ClsModel model);
std::unique_ptr<ImageEmbedder> load_embedder(const json& meta,
                                             const std::vector<double>& payload, size_t& pos);

}  // namespace beamtrack
