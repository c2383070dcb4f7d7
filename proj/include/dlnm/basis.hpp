#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dlnm/common.hpp"

namespace dlnm {

enum class BasisKind { BSpline, NaturalCubic, LinearIdentity, Dummy };

// Description of a univariate basis. `knots` holds interior plus boundary
// knots (strictly increasing); boundary replication for B-splines happens at
// evaluation time. `num_basis` is the number of columns actually produced:
// for B-splines v = #interior + degree + 1 when the basis spans constants,
// one less when the leading column is dropped (`intercept = false`).
struct BasisSpec {
  BasisKind kind = BasisKind::BSpline;
  int degree = 3;
  int num_basis = 0;
  std::vector<double> knots;
  bool intercept = true;

  // Equally spaced interior knots over [lo, hi].
  static BasisSpec bspline(int v, double lo, double hi, bool intercept = true, int degree = 3) {
    const int interior = v - degree - 1 + (intercept ? 0 : 1);
    if (interior < 0)
      throw std::invalid_argument("bspline basis: num_basis too small for degree " +
                                  std::to_string(degree));
    std::vector<double> knots;
    knots.push_back(lo);
    for (int i = 1; i <= interior; ++i)
      knots.push_back(lo + (hi - lo) * static_cast<double>(i) / (interior + 1));
    knots.push_back(hi);
    return BasisSpec{BasisKind::BSpline, degree, v, std::move(knots), intercept};
  }

  static BasisSpec bspline_with_knots(std::vector<double> knots, bool intercept = true,
                                      int degree = 3) {
    const int v = static_cast<int>(knots.size()) - 2 + degree + 1 - (intercept ? 0 : 1);
    return BasisSpec{BasisKind::BSpline, degree, v, std::move(knots), intercept};
  }

  // Knots include the two boundary knots; dimension = #knots with intercept.
  static BasisSpec natural_cubic(std::vector<double> knots, bool intercept = true) {
    const int v = static_cast<int>(knots.size()) - (intercept ? 0 : 1);
    return BasisSpec{BasisKind::NaturalCubic, 3, v, std::move(knots), intercept};
  }

  static BasisSpec linear_identity() {
    return BasisSpec{BasisKind::LinearIdentity, 1, 1, {}, false};
  }

  // F categories coded 1..F; category 1 is the reference.
  static BasisSpec dummy(int categories) {
    if (categories < 2) throw std::invalid_argument("dummy basis needs at least 2 categories");
    return BasisSpec{BasisKind::Dummy, 0, categories - 1, {}, false};
  }

  int categories() const { return num_basis + 1; }

  void validate() const {
    if (num_basis < 1) throw std::invalid_argument("basis dimension must be >= 1");
    switch (kind) {
      case BasisKind::BSpline: {
        if (degree < 0) throw std::invalid_argument("B-spline degree must be >= 0");
        if (knots.size() < 2) throw std::invalid_argument("B-spline needs boundary knots");
        for (std::size_t i = 1; i < knots.size(); ++i)
          if (!(knots[i] > knots[i - 1]))
            throw std::invalid_argument("knots must be strictly increasing");
        const int interior = static_cast<int>(knots.size()) - 2;
        const int expected = interior + degree + 1 - (intercept ? 0 : 1);
        if (num_basis != expected)
          throw std::invalid_argument("B-spline num_basis inconsistent with knots: expected " +
                                      std::to_string(expected) + ", got " +
                                      std::to_string(num_basis));
        break;
      }
      case BasisKind::NaturalCubic: {
        if (knots.size() < 2) throw std::invalid_argument("natural spline needs >= 2 knots");
        for (std::size_t i = 1; i < knots.size(); ++i)
          if (!(knots[i] > knots[i - 1]))
            throw std::invalid_argument("knots must be strictly increasing");
        const int expected = static_cast<int>(knots.size()) - (intercept ? 0 : 1);
        if (num_basis != expected)
          throw std::invalid_argument("natural spline num_basis inconsistent with knots");
        break;
      }
      case BasisKind::LinearIdentity:
        if (num_basis != 1) throw std::invalid_argument("linear identity basis has dimension 1");
        break;
      case BasisKind::Dummy:
        break;
    }
  }
};

namespace detail {

// De Boor's triangular scheme: values of the degree+1 B-splines that are
// nonzero on the span containing x. `t` is the knot vector with replicated
// boundaries, `span` satisfies t[span] <= x < t[span+1].
inline void bspline_nonzero(const std::vector<double>& t, int span, double x, int degree,
                            std::vector<double>& out) {
  out.assign(degree + 1, 0.0);
  std::vector<double> left(degree + 1), right(degree + 1);
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
}

inline void eval_bspline_row(const BasisSpec& spec, double x, double* row) {
  const int degree = spec.degree;
  const auto& k = spec.knots;
  const double lo = k.front();
  const double hi = k.back();
  if (x < lo || x > hi)
    throw std::domain_error("B-spline evaluation point " + std::to_string(x) +
                            " outside knot span [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
  // Extended knot vector with boundaries replicated degree extra times.
  std::vector<double> t;
  t.reserve(k.size() + 2 * degree);
  for (int i = 0; i < degree; ++i) t.push_back(lo);
  t.insert(t.end(), k.begin(), k.end());
  for (int i = 0; i < degree; ++i) t.push_back(hi);

  const int nbasis_full = static_cast<int>(t.size()) - degree - 1;
  // Locate the knot span; the last interval is right-closed.
  int span;
  if (x >= hi) {
    span = nbasis_full - 1;
  } else {
    span = static_cast<int>(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
    span = std::min(span, nbasis_full - 1);
  }
  std::vector<double> vals;
  bspline_nonzero(t, span, x, degree, vals);

  const int first = span - degree;
  const int drop = spec.intercept ? 0 : 1;
  for (int v = 0; v < spec.num_basis; ++v) row[v] = 0.0;
  for (int j = 0; j <= degree; ++j) {
    const int col = first + j - drop;
    if (col >= 0 && col < spec.num_basis) row[col] = vals[j];
  }
}

inline void eval_natural_cubic_row(const BasisSpec& spec, double x, double* row) {
  const auto& k = spec.knots;
  const int K = static_cast<int>(k.size());
  auto cube_pos = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  auto d = [&](int m) {
    return (cube_pos(x - k[m]) - cube_pos(x - k[K - 1])) / (k[K - 1] - k[m]);
  };
  int c = 0;
  if (spec.intercept) row[c++] = 1.0;
  row[c++] = x;
  const double d_last = d(K - 2);
  for (int m = 0; m + 2 < K; ++m) row[c++] = d(m) - d_last;
}

}  // namespace detail

// Row r of the result holds the basis functions evaluated at points[r].
inline Matrix eval_basis(const BasisSpec& spec, const Vector& points) {
  spec.validate();
  Matrix out = Matrix::Zero(points.size(), spec.num_basis);
  std::vector<double> row(spec.num_basis);
  for (Eigen::Index r = 0; r < points.size(); ++r) {
    const double x = points[r];
    switch (spec.kind) {
      case BasisKind::BSpline:
        detail::eval_bspline_row(spec, x, row.data());
        out.row(r) = Eigen::Map<const Vector>(row.data(), spec.num_basis);
        break;
      case BasisKind::NaturalCubic:
        detail::eval_natural_cubic_row(spec, x, row.data());
        out.row(r) = Eigen::Map<const Vector>(row.data(), spec.num_basis);
        break;
      case BasisKind::LinearIdentity:
        out(r, 0) = x;
        break;
      case BasisKind::Dummy: {
        const int F = spec.categories();
        const double rounded = std::nearbyint(x);
        if (std::abs(x - rounded) > 1e-9 || rounded < 1 || rounded > F)
          throw std::domain_error("categorical value " + std::to_string(x) +
                                  " outside 1.." + std::to_string(F));
        const int cat = static_cast<int>(rounded);
        if (cat >= 2) out(r, cat - 2) = 1.0;
        break;
      }
    }
  }
  return out;
}

inline Vector eval_basis_at(const BasisSpec& spec, double x) {
  Vector p(1);
  p[0] = x;
  return eval_basis(spec, p).row(0).transpose();
}

// m-th order forward difference operator, (v-m) x v.
inline Matrix difference_matrix(int v, int m) {
  if (m < 1 || v <= m)
    throw std::invalid_argument("difference_matrix requires v > m >= 1, got v=" +
                                std::to_string(v) + " m=" + std::to_string(m));
  auto first_diff = [](int n) {
    Matrix d = Matrix::Zero(n - 1, n);
    for (int i = 0; i < n - 1; ++i) {
      d(i, i) = -1.0;
      d(i, i + 1) = 1.0;
    }
    return d;
  };
  Matrix d = first_diff(v);
  for (int step = 1; step < m; ++step) d = first_diff(v - step) * d;
  return d;
}

// Full-rank roughness penalty D'D + ridge*I.
struct PenaltyBlock {
  Matrix matrix;
  int order = 0;
  double ridge = kPenaltyRidge;

  int dim() const { return static_cast<int>(matrix.rows()); }
};

inline PenaltyBlock penalty_block(int v, int m, double ridge = kPenaltyRidge) {
  if (ridge <= 0.0) throw std::invalid_argument("penalty ridge must be positive");
  const Matrix d = difference_matrix(v, m);
  Matrix s = d.transpose() * d;
  s.diagonal().array() += ridge;
  s = ((s + s.transpose()) / 2.0).eval();
  return PenaltyBlock{std::move(s), m, ridge};
}

// Diagonal penalty with weights k^2, pushing lag coefficients towards zero at
// long lags.
inline PenaltyBlock lag_shrink_block(int v_l, double ridge = kPenaltyRidge) {
  if (v_l < 1) throw std::invalid_argument("lag_shrink_block requires v_l >= 1");
  if (ridge <= 0.0) throw std::invalid_argument("penalty ridge must be positive");
  Matrix s = Matrix::Zero(v_l, v_l);
  for (int k = 0; k < v_l; ++k) s(k, k) = static_cast<double>(k) * k + ridge;
  return PenaltyBlock{std::move(s), 0, ridge};
}

}  // namespace dlnm
