#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dlnm/basis.hpp"
#include "dlnm/common.hpp"
#include "dlnm/crossbasis.hpp"
#include "dlnm/spatial.hpp"

namespace dlnm {

enum class Family { Poisson, NegativeBinomial };

enum class ModifierKind { None, Linear, Smooth, Categorical };

enum class MainEffectKind { None, Linear, Smooth, Dummy };

struct ModelSpec {
  Family likelihood = Family::Poisson;

  ModifierKind modifier = ModifierKind::None;
  int v_z = 5;        // smooth interaction basis dimension
  int categories = 2; // F for a categorical modifier

  MainEffectKind main_effect_z = MainEffectKind::None;
  int v_z2 = 10;      // smooth main-effect basis dimension

  SpatialSpec spatial;

  int v_x = 8;
  int v_l = 8;
  int max_lag = 8;
  bool lag_shrink = false;
  int diff_order = 2;
  double ridge = kPenaltyRidge;                       // delta
  double unpenalized_precision = kFixedEffectPrecision;  // zeta
  bool penalized = true;

  bool has_modifier_variable() const {
    return modifier != ModifierKind::None || main_effect_z != MainEffectKind::None;
  }

  int interaction_dim() const {
    switch (modifier) {
      case ModifierKind::None: return 0;
      case ModifierKind::Linear: return 1;
      case ModifierKind::Smooth: return v_z;
      case ModifierKind::Categorical: return categories - 1;
    }
    return 0;
  }

  int main_effect_dim() const {
    switch (main_effect_z) {
      case MainEffectKind::None: return 0;
      case MainEffectKind::Linear: return 1;
      case MainEffectKind::Smooth: return v_z2;
      case MainEffectKind::Dummy: return categories - 1;
    }
    return 0;
  }

  void validate() const {
    if (v_x < 1 || v_l < 1) throw config_error("cross-basis dimensions must be >= 1");
    if (max_lag < 0) throw config_error("max_lag must be >= 0");
    if (diff_order < 1) throw config_error("difference order must be >= 1");
    if (ridge <= 0.0 || unpenalized_precision <= 0.0)
      throw config_error("ridge constants must be positive");
    switch (modifier) {
      case ModifierKind::Smooth:
        if (main_effect_z != MainEffectKind::Smooth && main_effect_z != MainEffectKind::Linear)
          throw config_error("a smooth interaction requires a smooth or linear main effect of z");
        if (v_z < 2) throw config_error("smooth interaction basis needs v_z >= 2");
        break;
      case ModifierKind::Linear:
        if (main_effect_z != MainEffectKind::Linear && main_effect_z != MainEffectKind::Smooth)
          throw config_error("a linear interaction requires a linear or smooth main effect of z");
        break;
      case ModifierKind::Categorical:
        if (main_effect_z != MainEffectKind::Dummy)
          throw config_error("a categorical interaction requires a dummy-coded main effect");
        if (categories < 2) throw config_error("categorical modifier needs >= 2 categories");
        break;
      case ModifierKind::None:
        break;
    }
  }
};

// Offsets and lengths of the coefficient blocks (beta, gamma, theta1, theta2,
// u) inside the stacked vector xi.
struct BlockLayout {
  int beta_offset = 0, beta_len = 0;
  int gamma_offset = 0, gamma_len = 0;
  int theta1_offset = 0, theta1_len = 0;
  int theta2_offset = 0, theta2_len = 0;
  int u_offset = 0, u_len = 0;
  int n_total = 0;

  static BlockLayout make(int beta, int gamma, int theta1, int theta2, int u) {
    BlockLayout l;
    l.beta_len = beta;
    l.gamma_len = gamma;
    l.theta1_len = theta1;
    l.theta2_len = theta2;
    l.u_len = u;
    l.beta_offset = 0;
    l.gamma_offset = beta;
    l.theta1_offset = beta + gamma;
    l.theta2_offset = beta + gamma + theta1;
    l.u_offset = beta + gamma + theta1 + theta2;
    l.n_total = beta + gamma + theta1 + theta2 + u;
    return l;
  }
};

// Design matrix restricted to rows with complete lag history, plus the block
// layout of the stacked coefficient vector.
struct Design {
  Matrix H;
  Vector y;
  Vector offset;
  BlockLayout layout;
  std::vector<Eigen::Index> kept_rows;  // indices into the full area-major grid
};

// Columns are ordered [A | Z | W | V | M]. `covariates` holds the confounder
// columns of A (the intercept column is prepended here); `main_effect_basis`
// is the per-area design of the z main effect, replicated over time.
inline Design assemble_design(const Vector& counts, const Vector& offset, const Matrix& covariates,
                              const CrossBasis& cb, const InteractionBasis* ib,
                              const Matrix* main_effect_by_area, const ModelSpec& spec) {
  spec.validate();
  const Eigen::Index n_full = cb.W.rows();
  if (counts.size() != n_full || offset.size() != n_full)
    throw data_error("assemble_design: counts/offset rows do not match the cross-basis");
  if (covariates.rows() != 0 && covariates.rows() != n_full)
    throw data_error("assemble_design: covariate rows do not match the cross-basis");
  if (spec.modifier != ModifierKind::None && ib == nullptr)
    throw config_error("assemble_design: interaction basis required for this modifier");
  if (spec.main_effect_z != MainEffectKind::None && main_effect_by_area == nullptr)
    throw config_error("assemble_design: main-effect design required for this model");
  if (main_effect_by_area && main_effect_by_area->rows() != cb.n_areas)
    throw data_error("assemble_design: main-effect design must have one row per area");

  std::vector<Eigen::Index> kept;
  kept.reserve(n_full);
  for (Eigen::Index r = 0; r < n_full; ++r)
    if (cb.valid[r]) kept.push_back(r);
  const Eigen::Index n = static_cast<Eigen::Index>(kept.size());

  const int beta_len = 1 + static_cast<int>(covariates.cols());
  const int gamma_len = spec.main_effect_dim();
  const int theta1_len = cb.dim();
  const int theta2_len = (spec.modifier == ModifierKind::None) ? 0 : ib->dim();
  if (theta2_len != cb.dim() * spec.interaction_dim())
    throw config_error("assemble_design: interaction basis dimension mismatch");
  const int u_len = cb.n_areas;

  Design d;
  d.layout = BlockLayout::make(beta_len, gamma_len, theta1_len, theta2_len, u_len);
  d.H = Matrix::Zero(n, d.layout.n_total);
  d.y.resize(n);
  d.offset.resize(n);
  d.kept_rows = std::move(kept);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = d.kept_rows[i];
    const int area = static_cast<int>(r / cb.n_times);
    d.y[i] = counts[r];
    d.offset[i] = offset[r];
    d.H(i, 0) = 1.0;
    for (int c = 0; c < covariates.cols(); ++c) d.H(i, 1 + c) = covariates(r, c);
    for (int c = 0; c < gamma_len; ++c)
      d.H(i, d.layout.gamma_offset + c) = (*main_effect_by_area)(area, c);
    d.H.row(i).segment(d.layout.theta1_offset, theta1_len) = cb.W.row(r);
    if (theta2_len > 0) d.H.row(i).segment(d.layout.theta2_offset, theta2_len) = ib->V.row(r);
    d.H(i, d.layout.u_offset + area) = 1.0;
  }
  return d;
}

// Penalty on the (gamma, theta1, theta2) coefficients. The assembled matrix
// is fixed + sum_d lambda_d * lambda_blocks[d]; every positive lambda yields
// a positive definite matrix because each smoothness block carries its own
// ridge.
struct PenaltyAssembly {
  std::vector<std::string> lambda_names;
  std::vector<Matrix> lambda_blocks;
  Matrix fixed;
  int dim = 0;

  int n_lambda() const { return static_cast<int>(lambda_names.size()); }

  Matrix assemble(const Vector& lambda) const {
    if (lambda.size() != n_lambda())
      throw std::invalid_argument("penalty assemble: expected " + std::to_string(n_lambda()) +
                                  " smoothing parameters, got " + std::to_string(lambda.size()));
    Matrix p = fixed;
    for (int d = 0; d < n_lambda(); ++d) {
      if (!(lambda[d] > 0.0))
        throw std::invalid_argument("smoothing parameters must be positive");
      p += lambda[d] * lambda_blocks[d];
    }
    return p;
  }
};

inline PenaltyAssembly assemble_penalty(const ModelSpec& spec) {
  spec.validate();
  const int v_x = spec.v_x;
  const int v_l = spec.v_l;
  const int gamma_len = spec.main_effect_dim();
  const int theta1_len = v_x * v_l;
  const int theta2_len = theta1_len * spec.interaction_dim();

  PenaltyAssembly pa;
  pa.dim = gamma_len + theta1_len + theta2_len;
  pa.fixed = Matrix::Zero(pa.dim, pa.dim);

  if (!spec.penalized) {
    pa.fixed = spec.unpenalized_precision * Matrix::Identity(pa.dim, pa.dim);
    return pa;
  }

  // The difference order is capped at dim-1 so low-dimensional blocks (for
  // example a 2-column modifier basis) still receive a valid penalty.
  auto order_for = [&](int v) { return std::min(spec.diff_order, v - 1); };
  const Matrix s_x = penalty_block(v_x, order_for(v_x), spec.ridge).matrix;
  Matrix s_l;
  if (spec.lag_shrink) {
    // Shrinkage towards zero at long lags shares the lag smoothing parameter.
    const Matrix d_l = difference_matrix(v_l, order_for(v_l));
    s_l = d_l.transpose() * d_l;
    for (int k = 0; k < v_l; ++k) s_l(k, k) += static_cast<double>(k) * k;
    s_l.diagonal().array() += spec.ridge;
  } else {
    s_l = penalty_block(v_l, order_for(v_l), spec.ridge).matrix;
  }
  const Matrix i_x = Matrix::Identity(v_x, v_x);
  const Matrix i_l = Matrix::Identity(v_l, v_l);

  auto add_lambda = [&](const std::string& name, const Matrix& block, int offset) {
    Matrix full = Matrix::Zero(pa.dim, pa.dim);
    full.block(offset, offset, block.rows(), block.cols()) = block;
    pa.lambda_names.push_back(name);
    pa.lambda_blocks.push_back(std::move(full));
  };

  const bool interacting = spec.modifier != ModifierKind::None;
  const std::string x1 = interacting ? "lambda_x1" : "lambda_x";
  const std::string l1 = interacting ? "lambda_l1" : "lambda_l";
  add_lambda(x1, kron(s_x, i_l), gamma_len);
  add_lambda(l1, kron(i_x, s_l), gamma_len);

  const int theta2_offset = gamma_len + theta1_len;
  switch (spec.modifier) {
    case ModifierKind::None:
      break;
    case ModifierKind::Linear:
      add_lambda("lambda_x2", kron(s_x, i_l), theta2_offset);
      add_lambda("lambda_l2", kron(i_x, s_l), theta2_offset);
      break;
    case ModifierKind::Smooth: {
      const Matrix i_z = Matrix::Identity(spec.v_z, spec.v_z);
      const Matrix s_z = penalty_block(spec.v_z, order_for(spec.v_z), spec.ridge).matrix;
      add_lambda("lambda_x2", kron(i_z, kron(s_x, i_l)), theta2_offset);
      add_lambda("lambda_l2", kron(i_z, kron(i_x, s_l)), theta2_offset);
      add_lambda("lambda_z", kron(s_z, Matrix::Identity(theta1_len, theta1_len)), theta2_offset);
      break;
    }
    case ModifierKind::Categorical: {
      const Matrix i_f = Matrix::Identity(spec.categories - 1, spec.categories - 1);
      add_lambda("lambda_x2", kron(i_f, kron(s_x, i_l)), theta2_offset);
      add_lambda("lambda_l2", kron(i_f, kron(i_x, s_l)), theta2_offset);
      break;
    }
  }

  switch (spec.main_effect_z) {
    case MainEffectKind::None:
      break;
    case MainEffectKind::Smooth: {
      const Matrix s_z2 = penalty_block(spec.v_z2, order_for(spec.v_z2), spec.ridge).matrix;
      add_lambda("lambda_z2", s_z2, 0);
      break;
    }
    case MainEffectKind::Linear:
    case MainEffectKind::Dummy:
      pa.fixed.block(0, 0, gamma_len, gamma_len) =
          spec.unpenalized_precision * Matrix::Identity(gamma_len, gamma_len);
      break;
  }
  return pa;
}

// Joint prior precision Q = blkdiag(zeta * I, P(lambda), G).
inline Matrix assemble_joint_precision(const PenaltyAssembly& pa, const Vector& lambda,
                                       const SpatialSpec& spatial, double tau,
                                       std::optional<double> rho, const BlockLayout& layout,
                                       double zeta) {
  if (pa.dim != layout.gamma_len + layout.theta1_len + layout.theta2_len)
    throw std::invalid_argument("penalty assembly does not match the block layout");
  Matrix q = Matrix::Zero(layout.n_total, layout.n_total);
  q.block(0, 0, layout.beta_len, layout.beta_len) =
      zeta * Matrix::Identity(layout.beta_len, layout.beta_len);
  q.block(layout.gamma_offset, layout.gamma_offset, pa.dim, pa.dim) = pa.assemble(lambda);
  Matrix g = spatial_precision(spatial, tau, rho);
  if (g.rows() != layout.u_len)
    throw std::invalid_argument("spatial precision dimension does not match the layout");
  q.block(layout.u_offset, layout.u_offset, layout.u_len, layout.u_len) = g;
  return q;
}

}  // namespace dlnm
