#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlnm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Ridge added to difference penalties so every penalty block is full rank.
inline constexpr double kPenaltyRidge = 1e-12;
// Prior precision of fixed effects and other unpenalized coefficient blocks.
inline constexpr double kFixedEffectPrecision = 1e-5;

// Thrown for contradictory model/run configuration. CLI exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown for malformed or inconsistent input data. CLI exit code 3.
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a numerical routine fails (non-convergence, indefinite system).
// CLI exit code 4.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed-order pairwise summation: bit-stable and better conditioned than a
// running sum on long panels.
inline double pairwise_sum(const double* x, Eigen::Index n) {
  if (n <= 32) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const Eigen::Index h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const Vector& v) { return pairwise_sum(v.data(), v.size()); }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = prob * (static_cast<double>(values.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

// FNV-1a, used to stamp output artifacts with a stable hash of their config.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dlnm
