#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace beamtrack {

inline constexpr const char* kVersion = "0.1.0";

#ifdef BEAMTRACK_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Error taxonomy. The CLI maps these to exit codes:
//   ConfigError -> 2, DataError -> 3, CheckpointError -> 4, anything else -> 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct CheckpointError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};

// Dense row-major rank-3 tensor. Used for batched sequence inputs
// (batch x time x feature) and for feature maps' backing storage.
struct Tensor3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<Real> v;

  Tensor3() = default;
  Tensor3(int a, int b, int c)
      : n0(a), n1(b), n2(c), v(static_cast<size_t>(a) * b * c, Real(0)) {}

  Real& at(int i, int j, int k) {
    return v[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  Real at(int i, int j, int k) const {
    return v[(static_cast<size_t>(i) * n1 + j) * n2 + k];
  }
  size_t size() const { return v.size(); }
};

}  // namespace beamtrack
