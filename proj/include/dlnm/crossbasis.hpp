#pragma once

#include <utility>
#include <vector>

#include "dlnm/basis.hpp"
#include "dlnm/common.hpp"

namespace dlnm {

// Lagged exposure rows q_{t,j} = (x_t, x_{t-1}, ..., x_{t-L}) for every
// (time, area) cell. Rows are ordered area-major: row = j * T + t with t
// 0-based. Rows with fewer than L preceding observations are flagged invalid
// and excluded from all likelihood computations downstream.
struct ExposureHistory {
  Matrix values;  // (T*J) x (L+1)
  int max_lag = 0;
  int n_times = 0;
  int n_areas = 0;
  std::vector<char> valid;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index row_index(int t, int j) const {
    return static_cast<Eigen::Index>(j) * n_times + t;
  }
  int valid_per_area() const { return n_times - max_lag; }
};

inline ExposureHistory build_history(const std::vector<Vector>& exposure_by_area, int max_lag) {
  if (exposure_by_area.empty()) throw data_error("build_history: no areas supplied");
  if (max_lag < 0) throw std::invalid_argument("max_lag must be >= 0");
  const Eigen::Index T = exposure_by_area.front().size();
  for (std::size_t j = 1; j < exposure_by_area.size(); ++j)
    if (exposure_by_area[j].size() != T)
      throw data_error("build_history: ragged exposure series, area " + std::to_string(j) +
                       " has length " + std::to_string(exposure_by_area[j].size()) +
                       " but area 0 has " + std::to_string(T));
  if (T < max_lag + 1)
    throw data_error("build_history: series length " + std::to_string(T) +
                     " shorter than max_lag + 1");

  ExposureHistory h;
  h.max_lag = max_lag;
  h.n_times = static_cast<int>(T);
  h.n_areas = static_cast<int>(exposure_by_area.size());
  h.values.resize(T * h.n_areas, max_lag + 1);
  h.valid.assign(T * h.n_areas, 0);
  for (int j = 0; j < h.n_areas; ++j) {
    const Vector& x = exposure_by_area[j];
    for (int t = 0; t < h.n_times; ++t) {
      const Eigen::Index r = h.row_index(t, j);
      for (int l = 0; l <= max_lag; ++l)
        h.values(r, l) = (t - l >= 0) ? x[t - l] : x[0];  // placeholder on invalid rows
      h.valid[r] = (t >= max_lag) ? 1 : 0;
    }
  }
  return h;
}

// Exposure-lag tensor design matrix. Column (i, k) of W, with i indexing the
// exposure basis (major) and k the lag basis (minor), holds
// sum_l b_i(x_{t-l}) c_k(l). Invalid-history rows are zero.
struct CrossBasis {
  Matrix W;
  BasisSpec exposure_spec;
  BasisSpec lag_spec;
  int max_lag = 0;
  int n_times = 0;
  int n_areas = 0;
  std::vector<char> valid;

  int dim() const { return exposure_spec.num_basis * lag_spec.num_basis; }
  Eigen::Index row_index(int t, int j) const {
    return static_cast<Eigen::Index>(j) * n_times + t;
  }
};

inline CrossBasis build_crossbasis(const ExposureHistory& history, const BasisSpec& exposure_spec,
                                   const BasisSpec& lag_spec) {
  exposure_spec.validate();
  lag_spec.validate();
  const int v_x = exposure_spec.num_basis;
  const int v_l = lag_spec.num_basis;
  const int L = history.max_lag;

  const Matrix lag_basis = eval_basis(lag_spec, Vector::LinSpaced(L + 1, 0.0, L));

  CrossBasis cb;
  cb.exposure_spec = exposure_spec;
  cb.lag_spec = lag_spec;
  cb.max_lag = L;
  cb.n_times = history.n_times;
  cb.n_areas = history.n_areas;
  cb.valid = history.valid;
  cb.W = Matrix::Zero(history.rows(), v_x * v_l);

  for (Eigen::Index r = 0; r < history.rows(); ++r) {
    if (!history.valid[r]) continue;
    const Matrix exp_basis =
        eval_basis(exposure_spec, history.values.row(r).transpose());  // (L+1) x v_x
    // (i,k) entry of exp_basis' * lag_basis, flattened exposure-major.
    for (int i = 0; i < v_x; ++i)
      for (int k = 0; k < v_l; ++k)
        cb.W(r, i * v_l + k) = exp_basis.col(i).dot(lag_basis.col(k));
  }
  return cb;
}

// Modifier interaction design. Block r of V (r = 0..v_z-1, slowest index)
// equals W scaled row-wise by the r-th modifier basis function at the row's
// area-level modifier value.
struct InteractionBasis {
  Matrix V;
  BasisSpec modifier_spec;
  Vector modifier_values;   // per area
  Matrix modifier_basis;    // n_areas x v_z

  int dim() const { return static_cast<int>(V.cols()); }
};

inline InteractionBasis build_interaction(const CrossBasis& cb, const BasisSpec& modifier_spec,
                                          const Vector& z_by_area) {
  modifier_spec.validate();
  if (modifier_spec.kind != BasisKind::Dummy && modifier_spec.intercept)
    throw config_error("modifier interaction basis must exclude an intercept");
  if (z_by_area.size() != cb.n_areas)
    throw data_error("build_interaction: modifier values count " +
                     std::to_string(z_by_area.size()) + " does not match areas " +
                     std::to_string(cb.n_areas));
  if (!z_by_area.allFinite()) throw data_error("build_interaction: non-finite modifier value");

  const int v_z = modifier_spec.num_basis;
  const int m = cb.dim();
  InteractionBasis ib;
  ib.modifier_spec = modifier_spec;
  ib.modifier_values = z_by_area;
  ib.modifier_basis = eval_basis(modifier_spec, z_by_area);  // J x v_z

  ib.V = Matrix::Zero(cb.W.rows(), static_cast<Eigen::Index>(m) * v_z);
  for (int j = 0; j < cb.n_areas; ++j) {
    const Eigen::Index r0 = cb.row_index(0, j);
    for (int r = 0; r < v_z; ++r) {
      const double c = ib.modifier_basis(j, r);
      if (c != 0.0)
        ib.V.block(r0, static_cast<Eigen::Index>(r) * m, cb.n_times, m) =
            cb.W.middleRows(r0, cb.n_times) * c;
    }
  }
  return ib;
}

}  // namespace dlnm
