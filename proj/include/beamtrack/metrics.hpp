#pragma once

#include <string>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/io.hpp"

namespace beamtrack {

struct ScoringConfig {
  Real sigma = 5.0;  // exponential penalization factor

  void validate() const;
  json to_json() const;
  static ScoringConfig from_json(const json& j);
};

struct ScoreReport {
  Real score_1 = 0, score_3 = 0, score_5 = 0;
  Real total = 0;  // (score_1 + 3*score_3 + 5*score_5) / 9
  Real sigma = 0;
  size_t n_instances = 0;

  json to_json() const;
  static ScoreReport from_json(const json& j);
};

// Mean over instances of exp(-(1/(m*sigma)) * sum_{k<m} |pred_k - truth_k|).
// Each per-instance array must have at least m entries; the first m are used.
Real score_m(const std::vector<std::vector<int>>& preds,
             const std::vector<std::vector<int>>& truths, int m,
             const ScoringConfig& cfg);

Real total_score(Real s1, Real s3, Real s5);

// Cardinality-weighted mean of per-cluster scores.
Real weighted_cluster_score(const std::vector<Real>& scores,
                            const std::vector<size_t>& cardinalities);

// Score_1 / Score_3 / Score_5 / TotalScore in one pass. Requires m >= 5
// entries per instance.
ScoreReport make_score_report(const std::vector<std::vector<int>>& preds,
                              const std::vector<std::vector<int>>& truths,
                              const ScoringConfig& cfg);

// Plain-text and CSV renderings of a set of named score rows.
std::string render_score_table(
    const std::vector<std::pair<std::string, ScoreReport>>& rows);
std::string render_score_csv(
    const std::vector<std::pair<std::string, ScoreReport>>& rows);

}  // namespace beamtrack
