#include "beamtrack/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace beamtrack {

void ScoringConfig::validate() const {
  if (!(sigma > 0)) throw ConfigError("scoring: sigma must be > 0");
}

json ScoringConfig::to_json() const { return json{{"sigma", sigma}}; }

ScoringConfig ScoringConfig::from_json(const json& j) {
  ScoringConfig c;
  c.sigma = j.value("sigma", c.sigma);
  c.validate();
  return c;
}

json ScoreReport::to_json() const {
  return json{{"score_1", score_1}, {"score_3", score_3},
              {"score_5", score_5}, {"total", total},
              {"sigma", sigma},     {"n_instances", n_instances}};
}

ScoreReport ScoreReport::from_json(const json& j) {
  ScoreReport r;
  r.score_1 = j.at("score_1").get<Real>();
  r.score_3 = j.at("score_3").get<Real>();
  r.score_5 = j.at("score_5").get<Real>();
  r.total = j.at("total").get<Real>();
  r.sigma = j.at("sigma").get<Real>();
  r.n_instances = j.at("n_instances").get<size_t>();
  return r;
}

Real score_m(const std::vector<std::vector<int>>& preds,
             const std::vector<std::vector<int>>& truths, int m,
             const ScoringConfig& cfg) {
  cfg.validate();
  if (m < 1) throw ContractError("score_m: m must be >= 1");
  if (preds.size() != truths.size())
    throw ContractError("score_m: prediction/truth instance counts differ (" +
                        std::to_string(preds.size()) + " vs " +
                        std::to_string(truths.size()) + ")");
  if (preds.empty()) throw ContractError("score_m: no instances");

  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (static_cast<int>(preds[i].size()) < m ||
        static_cast<int>(truths[i].size()) < m)
      throw ContractError("score_m: instance " + std::to_string(i) +
                          " has fewer than m=" + std::to_string(m) +
                          " entries");
    double err = 0.0;
    for (int k = 0; k < m; ++k)
      err += std::abs(static_cast<double>(preds[i][k]) - truths[i][k]);
    acc += std::exp(-err / (static_cast<double>(m) * cfg.sigma));
  }
  return static_cast<Real>(acc / static_cast<double>(preds.size()));
}

Real total_score(Real s1, Real s3, Real s5) {
  return (s1 + 3 * s3 + 5 * s5) / 9;
}

Real weighted_cluster_score(const std::vector<Real>& scores,
                            const std::vector<size_t>& cardinalities) {
  if (scores.size() != cardinalities.size())
    throw ContractError("weighted_cluster_score: length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    num += static_cast<double>(scores[i]) * static_cast<double>(cardinalities[i]);
    den += static_cast<double>(cardinalities[i]);
  }
  if (den <= 0)
    throw ContractError("weighted_cluster_score: zero total cardinality");
  return static_cast<Real>(num / den);
}

ScoreReport make_score_report(const std::vector<std::vector<int>>& preds,
                              const std::vector<std::vector<int>>& truths,
                              const ScoringConfig& cfg) {
  ScoreReport r;
  r.score_1 = score_m(preds, truths, 1, cfg);
  r.score_3 = score_m(preds, truths, 3, cfg);
  r.score_5 = score_m(preds, truths, 5, cfg);
  r.total = total_score(r.score_1, r.score_3, r.score_5);
  r.sigma = cfg.sigma;
  r.n_instances = preds.size();
  return r;
}

static std::string fmt3(Real x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(x));
  return buf;
}

std::string render_score_table(
    const std::vector<std::pair<std::string, ScoreReport>>& rows) {
  size_t name_w = 5;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  os << std::string(name_w, ' ') << " | Score_1 | Score_3 | Score_5 | TotalScore\n";
  os << std::string(name_w, '-') << "-+---------+---------+---------+-----------\n";
  for (const auto& [name, r] : rows) {
    os << name << std::string(name_w - name.size(), ' ') << " |   "
       << fmt3(r.score_1) << " |   " << fmt3(r.score_3) << " |   "
       << fmt3(r.score_5) << " |      " << fmt3(r.total) << "\n";
  }
  return os.str();
}

std::string render_score_csv(
    const std::vector<std::pair<std::string, ScoreReport>>& rows) {
  std::ostringstream os;
  os << "name,score_1,score_3,score_5,total_score,sigma,n_instances\n";
  os.precision(17);
  for (const auto& [name, r] : rows) {
    os << name << "," << r.score_1 << "," << r.score_3 << "," << r.score_5
       << "," << r.total << "," << r.sigma << "," << r.n_instances << "\n";
  }
  return os.str();
}

}  // namespace beamtrack
