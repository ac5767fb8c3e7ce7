#include "beamtrack/baselines.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace beamtrack {

namespace {

int clamp_beam(double v, int num_beams) {
  long r = std::lround(v);  // rounds half away from zero
  if (r < 0)
    return 0;
  if (r >= num_beams)
    return num_beams - 1;
  return static_cast<int>(r);
}

}  // namespace

Predictions last_step_predict(const Dataset& ds, int m) {
  if (m < 1)
    throw ContractError("horizon m must be >= 1");
  Predictions out;
  out.reserve(ds.size());
  for (const auto& rec : ds.records) {
    if (rec.beams.empty())
      throw ContractError("record with empty observation");
    out.emplace_back(m, rec.beams.back());
  }
  return out;
}

Predictions linreg_predict(const Dataset& ds, int m, int num_beams) {
  if (m < 1 || num_beams < 1)
    throw ContractError("horizon and codebook size must be >= 1");
  Predictions out;
  out.reserve(ds.size());
  for (const auto& rec : ds.records) {
    const int tau = static_cast<int>(rec.beams.size());
    if (tau < 1)
      throw ContractError("record with empty observation");
    double xbar = (tau - 1) / 2.0;
    double ybar = 0.0;
    for (int b : rec.beams)
      ybar += b;
    ybar /= tau;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < tau; ++i) {
      sxx += (i - xbar) * (i - xbar);
      sxy += (i - xbar) * (rec.beams[i] - ybar);
    }
    double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    double intercept = ybar - slope * xbar;
    std::vector<int> preds(m);
    for (int k = 1; k <= m; ++k)
      preds[k - 1] = clamp_beam(intercept + slope * (tau - 1 + k), num_beams);
    out.push_back(std::move(preds));
  }
  return out;
}

json BeamDistribution::to_json() const { return {{"probs", probs}}; }

BeamDistribution BeamDistribution::from_json(const json& j) {
  BeamDistribution d;
  d.probs = j.at("probs").get<std::vector<Real>>();
  return d;
}

BeamDistribution fit_beam_distribution(const Dataset& train, int num_beams) {
  if (train.empty())
    throw ContractError("cannot fit beam distribution on empty dataset");
  std::vector<double> counts(num_beams, 0.0);
  double total = 0.0;
  for (const auto& rec : train.records)
    for (int b : rec.beams) {
      if (b < 0 || b >= num_beams)
        throw DataError("beam index " + std::to_string(b) + " outside [0, " +
                        std::to_string(num_beams) + ")");
      counts[b] += 1.0;
      total += 1.0;
    }
  BeamDistribution dist;
  dist.probs.resize(num_beams);
  for (int q = 0; q < num_beams; ++q)
    dist.probs[q] = static_cast<Real>(counts[q] / total);
  return dist;
}

Predictions statistical_predict(const BeamDistribution& dist, const Dataset& ds, int m,
                                uint64_t seed) {
  if (m < 1)
    throw ContractError("horizon m must be >= 1");
  if (dist.probs.empty())
    throw ContractError("empty beam distribution");
  Predictions out;
  out.reserve(ds.size());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    Rng rng(Rng::mix(seed, i));
    std::vector<int> preds(m);
    for (int k = 0; k < m; ++k) {
      Real u = rng.uniform();
      double cum = 0.0;
      int pick = static_cast<int>(dist.probs.size()) - 1;
      for (size_t q = 0; q < dist.probs.size(); ++q) {
        cum += dist.probs[q];
        if (u < cum) {
          pick = static_cast<int>(q);
          break;
        }
      }
      preds[k] = pick;
    }
    out.push_back(std::move(preds));
  }
  return out;
}

void write_predictions_csv(const std::filesystem::path& path, const Dataset& ds,
                           const Predictions& preds) {
  if (preds.size() != ds.size())
    throw ContractError("predictions/dataset size mismatch");
  std::ofstream out(path);
  if (!out)
    throw DataError("cannot write predictions CSV: " + path.string());
  const int m = preds.empty() ? 0 : static_cast<int>(preds.front().size());
  out << "user_id,t";
  for (int k = 1; k <= m; ++k)
    out << ",pred_" << k;
  out << "\n";
  for (size_t i = 0; i < preds.size(); ++i) {
    out << ds.records[i].user_id << "," << ds.records[i].t;
    for (int p : preds[i])
      out << "," << p;
    out << "\n";
  }
  if (!out)
    throw DataError("write failed: " + path.string());
}

Predictions read_predictions_csv(const std::filesystem::path& path, int m) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open predictions CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw DataError("empty predictions CSV: " + path.string());
  Predictions out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell);
    if (cells.size() != static_cast<size_t>(m) + 2)
      throw DataError("bad field count at " + path.string() + ":" + std::to_string(line_no));
    std::vector<int> preds(m);
    for (int k = 0; k < m; ++k) {
      try {
        preds[k] = std::stoi(cells[2 + k]);
      } catch (const std::exception&) {
        throw DataError("malformed prediction at " + path.string() + ":" +
                        std::to_string(line_no));
      }
    }
    out.push_back(std::move(preds));
  }
  return out;
}

}  // namespace beamtrack
