#pragma once

#include <cmath>
#include <vector>

#include "dlnm/basis.hpp"
#include "dlnm/crossbasis.hpp"
#include "dlnm/laplace.hpp"
#include "dlnm/model.hpp"

namespace dlnm {

// Numeric inputs of a single fit, area-major (row = area * T + t).
struct FitInputs {
  std::vector<Vector> exposure_by_area;
  Vector counts;
  Vector offset;      // log population, or zeros
  Matrix covariates;  // confounder columns of A (may be empty)
  Vector z_by_area;   // modifier values, empty when the model has none
};

struct FittedModel {
  ModelSpec spec;
  CrossBasis cb;
  InteractionBasis ib;        // empty unless the model has an interaction
  BasisSpec main_effect_spec; // meaningful only with a main effect of z
  AssembledModel model;
  std::vector<Eigen::Index> kept_rows;
  FitResult fit;

  bool has_interaction() const { return spec.modifier != ModifierKind::None; }
};

namespace detail {

inline std::pair<double, double> exposure_range(const std::vector<Vector>& series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& x : series) {
    if (x.size() == 0) continue;
    lo = std::min(lo, x.minCoeff());
    hi = std::max(hi, x.maxCoeff());
  }
  if (!(lo < hi)) throw data_error("exposure series are constant; cannot place knots");
  return {lo, hi};
}

// Interior knots equally spaced on the log(1 + lag) scale.
inline std::vector<double> log_lag_knots(int max_lag, int n_interior) {
  std::vector<double> knots{0.0};
  const double top = std::log1p(static_cast<double>(max_lag));
  for (int i = 1; i <= n_interior; ++i)
    knots.push_back(std::expm1(top * static_cast<double>(i) / (n_interior + 1)));
  knots.push_back(static_cast<double>(max_lag));
  return knots;
}

inline BasisSpec default_exposure_spec(const ModelSpec& spec, const std::vector<Vector>& series) {
  auto [lo, hi] = exposure_range(series);
  if (spec.penalized) return BasisSpec::bspline(spec.v_x, lo, hi, /*intercept=*/false);
  std::vector<double> pooled;
  for (const auto& x : series) pooled.insert(pooled.end(), x.data(), x.data() + x.size());
  const double q10 = quantile(pooled, 0.10);
  const double q90 = quantile(pooled, 0.90);
  if (!(lo < q10 && q10 < q90 && q90 < hi))
    throw data_error("degenerate exposure quantiles for natural-spline knots");
  return BasisSpec::natural_cubic({lo, q10, q90, hi}, /*intercept=*/false);
}

inline BasisSpec default_lag_spec(const ModelSpec& spec) {
  const int L = spec.max_lag;
  if (spec.penalized) {
    const int interior = spec.v_l - 3 - 1;
    if (interior < 0) return BasisSpec::bspline(spec.v_l, 0.0, L, true, std::min(3, spec.v_l - 1));
    return BasisSpec::bspline_with_knots(log_lag_knots(L, interior), true, 3);
  }
  if (L < 3) throw config_error("natural-spline lag basis needs max_lag >= 3");
  return BasisSpec::natural_cubic(log_lag_knots(L, 2), /*intercept=*/true);
}

inline std::pair<double, double> modifier_range(const Vector& z) {
  const double lo = z.minCoeff();
  const double hi = z.maxCoeff();
  if (!(lo < hi)) throw data_error("modifier values are constant; cannot build a smooth basis");
  return {lo, hi};
}

}  // namespace detail

inline BasisSpec modifier_interaction_spec(const ModelSpec& spec, const Vector& z) {
  switch (spec.modifier) {
    case ModifierKind::Linear:
      return BasisSpec::linear_identity();
    case ModifierKind::Smooth: {
      auto [lo, hi] = detail::modifier_range(z);
      return BasisSpec::bspline(spec.v_z, lo, hi, /*intercept=*/false);
    }
    case ModifierKind::Categorical:
      return BasisSpec::dummy(spec.categories);
    case ModifierKind::None:
      break;
  }
  throw config_error("no interaction basis for a model without a modifier");
}

inline BasisSpec main_effect_spec(const ModelSpec& spec, const Vector& z) {
  switch (spec.main_effect_z) {
    case MainEffectKind::Linear:
      return BasisSpec::linear_identity();
    case MainEffectKind::Smooth: {
      auto [lo, hi] = detail::modifier_range(z);
      return BasisSpec::bspline(spec.v_z2, lo, hi, /*intercept=*/false);
    }
    case MainEffectKind::Dummy:
      return BasisSpec::dummy(spec.categories);
    case MainEffectKind::None:
      break;
  }
  throw config_error("no main-effect basis for a model without one");
}

// Build bases from the data, assemble the model, and maximize the
// hyperparameter posterior.
inline FittedModel fit_model(const FitInputs& in, ModelSpec spec, const FitOptions& opts = {}) {
  spec.validate();
  if (in.exposure_by_area.empty()) throw data_error("fit_model: no exposure series");
  const int n_areas = static_cast<int>(in.exposure_by_area.size());
  spec.spatial.validate(n_areas);
  if (spec.spatial.kind == SpatialKind::IID) spec.spatial.graph.n_areas = n_areas;
  if (spec.has_modifier_variable() && in.z_by_area.size() != n_areas)
    throw data_error("fit_model: modifier values must be per-area");

  FittedModel out;
  auto history = build_history(in.exposure_by_area, spec.max_lag);
  BasisSpec exposure_spec = detail::default_exposure_spec(spec, in.exposure_by_area);
  BasisSpec lag_spec = detail::default_lag_spec(spec);
  if (!spec.penalized) {  // natural-spline dimensions come from the knot rule
    spec.v_x = exposure_spec.num_basis;
    spec.v_l = lag_spec.num_basis;
  }
  out.cb = build_crossbasis(history, exposure_spec, lag_spec);

  const InteractionBasis* ib_ptr = nullptr;
  if (spec.modifier != ModifierKind::None) {
    out.ib = build_interaction(out.cb, modifier_interaction_spec(spec, in.z_by_area),
                               in.z_by_area);
    ib_ptr = &out.ib;
  }
  Matrix main_effect;
  const Matrix* main_ptr = nullptr;
  if (spec.main_effect_z != MainEffectKind::None) {
    out.main_effect_spec = main_effect_spec(spec, in.z_by_area);
    main_effect = eval_basis(out.main_effect_spec, in.z_by_area);
    main_ptr = &main_effect;
  }

  Design design = assemble_design(in.counts, in.offset, in.covariates, out.cb, ib_ptr, main_ptr,
                                  spec);
  check_counts(design.y);

  out.spec = spec;
  out.kept_rows = std::move(design.kept_rows);
  out.model.H = std::move(design.H);
  out.model.y = std::move(design.y);
  out.model.offset = std::move(design.offset);
  out.model.layout = design.layout;
  out.model.penalty = assemble_penalty(spec);
  out.model.spatial = spec.spatial;
  out.model.family = spec.likelihood;
  out.model.finalize();

  auto initial = Hyperparams::defaults(out.model.penalty.n_lambda(),
                                       out.model.spatial.has_correlation(),
                                       spec.likelihood == Family::NegativeBinomial);
  out.fit = hyper_optimize(out.model, initial, opts);
  return out;
}

}  // namespace dlnm
