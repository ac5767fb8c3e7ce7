#pragma once

#include <filesystem>
#include <vector>

#include "beamtrack/common.hpp"

namespace beamtrack {

// Stand-in for an extracted camera feature tensor, H x W x C, row-major.
struct FeatureMap {
  int h = 0, w = 0, c = 0;
  std::vector<Real> values;

  FeatureMap() = default;
  FeatureMap(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_),
        values(static_cast<size_t>(h_) * w_ * c_, Real(0)) {}

  Real& at(int i, int j, int k) {
    return values[(static_cast<size_t>(i) * w + j) * c + k];
  }
  Real at(int i, int j, int k) const {
    return values[(static_cast<size_t>(i) * w + j) * c + k];
  }

  size_t size() const { return values.size(); }

  bool same_as(const FeatureMap& o) const {
    return h == o.h && w == o.w && c == o.c && values == o.values;
  }

  Vec flatten() const {
    Vec out(static_cast<Eigen::Index>(values.size()));
    for (size_t i = 0; i < values.size(); ++i)
      out(static_cast<Eigen::Index>(i)) = values[i];
    return out;
  }
};

void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path);
FeatureMap load_feature_map(const std::filesystem::path& path);

}  // namespace beamtrack
