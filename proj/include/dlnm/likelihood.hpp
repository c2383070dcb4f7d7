#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>

#include "dlnm/common.hpp"
#include "dlnm/model.hpp"

namespace dlnm {

// Linear predictors are clamped to this range while a line search probes
// trial points, keeping exp(eta) finite. Converged evaluations never clamp.
inline constexpr double kEtaGuard = 40.0;

inline Vector cached_log_factorial(const Vector& y) {
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = std::lgamma(y[i] + 1.0);
  return out;
}

inline void check_counts(const Vector& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] >= 0.0) || std::nearbyint(y[i]) != y[i])
      throw data_error("counts must be nonnegative integers; offending value " +
                       std::to_string(y[i]) + " at row " + std::to_string(i));
  }
}

// Log-likelihood of the count model at linear predictor eta (offset already
// included). Throws on non-finite eta so callers can backtrack.
inline double count_loglik(const Vector& y, const Vector& eta, Family family, double phi,
                           const Vector& log_factorial) {
  if (y.size() != eta.size()) throw std::invalid_argument("count_loglik: length mismatch");
  if (!eta.allFinite()) throw numeric_error("count_loglik: non-finite linear predictor");
  Vector terms(y.size());
  if (family == Family::Poisson) {
    terms = y.array() * eta.array() - eta.array().exp() - log_factorial.array();
  } else {
    if (!(phi > 0.0)) throw std::invalid_argument("negative binomial requires phi > 0");
    const double lgamma_phi = std::lgamma(phi);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double mu = std::exp(eta[i]);
      const double denom = std::log(phi + mu);
      terms[i] = std::lgamma(y[i] + phi) - lgamma_phi - log_factorial[i] +
                 phi * (std::log(phi) - denom) + (y[i] > 0.0 ? y[i] * (eta[i] - denom) : 0.0);
    }
  }
  return pairwise_sum(terms);
}

// Per-row score d loglik / d eta and curvature weight -d2 loglik / d eta2.
// The negative binomial weight defaults to its expectation phi*mu/(phi+mu),
// which keeps Newton systems positive definite; `observed_information`
// switches to the exact curvature phi*mu*(phi+y)/(phi+mu)^2.
inline void count_score_weight(const Vector& y, const Vector& eta, Family family, double phi,
                               bool observed_information, Vector& score, Vector& weight) {
  score.resize(y.size());
  weight.resize(y.size());
  if (family == Family::Poisson) {
    const auto mu = eta.array().exp();
    score = y.array() - mu;
    weight = mu;
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double mu = std::exp(eta[i]);
      const double denom = phi + mu;
      score[i] = phi * (y[i] - mu) / denom;
      weight[i] = observed_information ? phi * mu * (phi + y[i]) / (denom * denom)
                                       : phi * mu / denom;
    }
  }
}

// Gradient and Hessian of the count log-likelihood in the coefficient vector.
inline std::pair<Vector, Matrix> count_grad_hess(const Vector& y, const Matrix& H,
                                                 const Vector& offset, const Vector& xi,
                                                 Family family, double phi,
                                                 bool observed_information = false) {
  const Vector eta = H * xi + offset;
  if (!eta.allFinite()) throw numeric_error("count_grad_hess: non-finite linear predictor");
  Vector score, weight;
  count_score_weight(y, eta, family, phi, observed_information, score, weight);
  Vector grad = H.transpose() * score;
  Matrix hess = -(H.transpose() * weight.asDiagonal() * H);
  return {std::move(grad), std::move(hess)};
}

// Exact derivative of the negative binomial log-likelihood in phi.
inline double nb_dloglik_dphi(const Vector& y, const Vector& mu, double phi) {
  if (!(phi > 0.0)) throw std::invalid_argument("nb_dloglik_dphi requires phi > 0");
  if (y.size() != mu.size()) throw std::invalid_argument("nb_dloglik_dphi: length mismatch");
  const double digamma_phi = boost::math::digamma(phi);
  Vector terms(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double denom = phi + mu[i];
    terms[i] = boost::math::digamma(y[i] + phi) - digamma_phi + std::log(phi / denom) + 1.0 -
               (phi + y[i]) / denom;
  }
  return pairwise_sum(terms);
}

// Data-side term of the penalized objective, used by the Newton solver.
// eval() returns the log-likelihood at H*xi and fills score/weight; when
// `guard` is set, a wild linear predictor yields -inf instead of a throw so
// the line search can backtrack.
struct CountDataTerm {
  const Vector* y = nullptr;
  const Vector* offset = nullptr;
  Family family = Family::Poisson;
  double phi = std::numeric_limits<double>::infinity();
  bool observed_information = false;
  Vector log_factorial;

  CountDataTerm() = default;
  CountDataTerm(const Vector& y_in, const Vector& offset_in, Family family_in, double phi_in)
      : y(&y_in),
        offset(&offset_in),
        family(family_in),
        phi(phi_in),
        log_factorial(cached_log_factorial(y_in)) {}

  Eigen::Index rows() const { return y->size(); }

  double eval(const Vector& linear, Vector* score, Vector* weight, bool guard) const {
    Vector eta = linear + *offset;
    if (guard) {
      if (!eta.allFinite()) return -std::numeric_limits<double>::infinity();
      eta = eta.cwiseMax(-kEtaGuard).cwiseMin(kEtaGuard);
    }
    const double ll = count_loglik(*y, eta, family,
                                   family == Family::Poisson ? 1.0 : phi, log_factorial);
    if (score != nullptr)
      count_score_weight(*y, eta, family, phi, observed_information, *score, *weight);
    return ll;
  }
};

}  // namespace dlnm
