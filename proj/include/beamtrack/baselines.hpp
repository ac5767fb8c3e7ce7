#pragma once

#include <filesystem>
#include <vector>

#include "beamtrack/common.hpp"
#include "beamtrack/dataset.hpp"
#include "beamtrack/rng.hpp"

namespace beamtrack {

using Predictions = std::vector<std::vector<int>>;  // [record][m]

// Repeats the last observed beam for all m future steps.
Predictions last_step_predict(const Dataset& ds, int m);

// Ordinary least squares over (step index, beam index) pairs per record,
// extrapolated to the m future steps, rounded half away from zero and clamped
// to [0, num_beams).
Predictions linreg_predict(const Dataset& ds, int m, int num_beams);

// Empirical beam frequencies over the observed columns of a training set.
struct BeamDistribution {
  std::vector<Real> probs;  // length num_beams, sums to 1

  json to_json() const;
  static BeamDistribution from_json(const json& j);
};

BeamDistribution fit_beam_distribution(const Dataset& train, int num_beams);

// Draws each future beam independently from the fitted distribution. Each
// record uses an independent subseed so predictions do not depend on record
// order.
Predictions statistical_predict(const BeamDistribution& dist, const Dataset& ds, int m,
                                uint64_t seed);

void write_predictions_csv(const std::filesystem::path& path, const Dataset& ds,
                           const Predictions& preds);
Predictions read_predictions_csv(const std::filesystem::path& path, int m);

}  // namespace beamtrack
