#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "dlnm/common.hpp"
#include "dlnm/likelihood.hpp"
#include "dlnm/model.hpp"
#include "dlnm/optimize.hpp"

namespace dlnm {

struct NewtonOptions {
  int max_iterations = 100;
  double grad_tol = 1e-8;
  double obj_tol = 1e-10;
};

// Mode and curvature of the conditional posterior of the coefficients.
struct InnerResult {
  Vector xi;
  Eigen::LLT<Matrix> chol;  // factor of H' W H + Q at the mode
  double logpost = -std::numeric_limits<double>::infinity();
  double loglik = -std::numeric_limits<double>::infinity();
  double logdet_precision = 0.0;
  int iterations = 0;
  bool converged = false;

  Matrix covariance() const {
    return chol.solve(Matrix::Identity(xi.size(), xi.size()));
  }
};

inline double logdet_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    Matrix jittered = m;
    jittered.diagonal().array() += 1e-8 * m.trace() / static_cast<double>(m.rows());
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
      throw numeric_error("logdet: matrix is not positive definite");
  }
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

// Newton ascent with step halving for the penalized objective
//   loglik(H xi) - xi' Q xi / 2.
// The data term follows the CountDataTerm interface: eval(linear, &score,
// &weight, guard) returning the log-likelihood.
template <class DataTerm>
InnerResult inner_mode(const DataTerm& term, const Matrix& H, const Matrix& Q,
                       const Vector* start = nullptr, const NewtonOptions& opts = {}) {
  const Eigen::Index p = H.cols();
  if (Q.rows() != p || Q.cols() != p)
    throw std::invalid_argument("inner_mode: Q must be square of the design width");

  InnerResult res;
  res.xi = start != nullptr ? *start : Vector::Zero(p);

  Vector score, weight;
  Vector linear = H * res.xi;
  double ll = term.eval(linear, &score, &weight, /*guard=*/true);
  double obj = ll - 0.5 * res.xi.dot(Q * res.xi);
  if (!std::isfinite(obj)) {  // unusable warm start
    res.xi.setZero();
    linear.setZero();
    ll = term.eval(linear, &score, &weight, true);
    obj = ll - 0.5 * res.xi.dot(Q * res.xi);
    if (!std::isfinite(obj)) throw numeric_error("inner Newton: objective not finite at zero");
  }

  Vector grad = H.transpose() * score - Q * res.xi;
  // Floating-point floor for the gradient: entries are dot products of length
  // n, so cancellation noise scales with the largest row sums.
  const double grad_scale = (H.transpose() * score.cwiseAbs()).cwiseAbs().maxCoeff();
  const double grad_tol = std::max(opts.grad_tol, 1e-13 * grad_scale);

  Matrix a(p, p);
  Matrix bt;
  double rel_change = std::numeric_limits<double>::infinity();

  for (int it = 0;; ++it) {
    a = Q;
    bt = H.transpose() * weight.cwiseSqrt().asDiagonal();
    a.template selfadjointView<Eigen::Lower>().rankUpdate(bt);
    res.chol.compute(a);
    if (res.chol.info() != Eigen::Success) {
      a.diagonal().array() += 1e-8 * a.trace() / static_cast<double>(p);
      res.chol.compute(a);
      if (res.chol.info() != Eigen::Success)
        throw numeric_error("inner Newton: curvature matrix is not positive definite");
    }

    if (grad.cwiseAbs().maxCoeff() < grad_tol && rel_change < opts.obj_tol) {
      res.converged = true;
      res.iterations = it;
      break;
    }
    if (it >= opts.max_iterations)
      throw numeric_error("inner Newton: no convergence in " +
                          std::to_string(opts.max_iterations) + " iterations, |grad|=" +
                          std::to_string(grad.cwiseAbs().maxCoeff()));

    const Vector direction = res.chol.solve(grad);
    const double slope = grad.dot(direction);
    // The Newton decrement bounds the remaining ascent; once it falls below
    // the objective's floating-point resolution the mode is resolved as
    // precisely as doubles allow.
    if (slope < 1e-13 * (1.0 + std::abs(obj))) {
      res.converged = true;
      res.iterations = it;
      break;
    }

    double step = 1.0;
    bool accepted = false;
    Vector xi_new, linear_new, score_new, weight_new;
    double ll_new = 0.0, obj_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      xi_new = res.xi + step * direction;
      linear_new = H * xi_new;
      ll_new = term.eval(linear_new, &score_new, &weight_new, true);
      obj_new = ll_new - 0.5 * xi_new.dot(Q * xi_new);
      if (std::isfinite(obj_new) && obj_new >= obj + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // The objective cannot be improved along the Newton direction; accept
      // the current point if the gradient is already at the noise floor.
      if (grad.cwiseAbs().maxCoeff() < std::max(grad_tol * 1e3, 1e-13 * grad_scale * 1e3)) {
        res.converged = true;
        res.iterations = it;
        break;
      }
      throw numeric_error("inner Newton: line search failed with |grad|=" +
                          std::to_string(grad.cwiseAbs().maxCoeff()));
    }

    rel_change = std::abs(obj_new - obj) / (1.0 + std::abs(obj));
    res.xi = std::move(xi_new);
    linear = std::move(linear_new);
    score = std::move(score_new);
    weight = std::move(weight_new);
    ll = ll_new;
    obj = obj_new;
    grad = H.transpose() * score - Q * res.xi;
  }

  // Converged values are reported without the linear-predictor guard.
  res.loglik = term.eval(linear, nullptr, nullptr, false);
  res.logpost = res.loglik - 0.5 * res.xi.dot(Q * res.xi);
  res.logdet_precision = 2.0 * Matrix(res.chol.matrixL()).diagonal().array().log().sum();
  return res;
}

// Laplace approximation of the log marginal likelihood given the prior
// precision Q: logpost at the mode + logdet(Q)/2 - logdet(H'WH + Q)/2. Exact
// when the data term is Gaussian.
template <class DataTerm>
InnerResult laplace_evidence(const DataTerm& term, const Matrix& H, const Matrix& Q,
                             double& evidence, const Vector* start = nullptr,
                             const NewtonOptions& opts = {}) {
  InnerResult inner = inner_mode(term, H, Q, start, opts);
  evidence = inner.logpost + 0.5 * logdet_spd(Q) - 0.5 * inner.logdet_precision;
  return inner;
}

// Gamma(shape, rate) log-density.
inline double gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double beta_half_logpdf(double x) {
  if (!(x > 0.0) || !(x < 1.0)) return -std::numeric_limits<double>::infinity();
  return -std::log(M_PI) - 0.5 * std::log(x) - 0.5 * std::log1p(-x);
}

// Robust Gamma-type hyperprior on the smoothing and variance parameters.
struct HyperpriorSettings {
  double nu = 3.0;
  double a = 1e-5;
  double b = 1e-5;

  // Conditional mode of an auxiliary delta given its lambda (or tau).
  double delta_mode(double lambda) const { return (a + nu / 2.0 - 1.0) / (b + nu * lambda / 2.0); }
};

struct Hyperparams {
  Vector lambda;
  Vector delta_lambda;
  double tau = 1.0;
  double delta_tau = 1.0;
  std::optional<double> rho;
  double phi = std::numeric_limits<double>::infinity();

  static Hyperparams defaults(int n_lambda, bool leroux, bool negative_binomial) {
    Hyperparams h;
    h.lambda = Vector::Ones(n_lambda);
    h.delta_lambda = Vector::Ones(n_lambda);
    if (leroux) h.rho = 0.5;
    if (negative_binomial) h.phi = 100.0;
    return h;
  }

  void update_auxiliaries(const HyperpriorSettings& prior) {
    delta_lambda.resize(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
      delta_lambda[i] = prior.delta_mode(lambda[i]);
    delta_tau = prior.delta_mode(tau);
  }
};

// Everything that stays fixed while the hyperparameters move.
struct AssembledModel {
  Matrix H;
  Vector y;
  Vector offset;
  BlockLayout layout;
  PenaltyAssembly penalty;
  SpatialSpec spatial;
  Family family = Family::Poisson;
  bool observed_information = false;
  Vector log_factorial;

  void finalize() { log_factorial = cached_log_factorial(y); }

  CountDataTerm data_term(double phi) const {
    CountDataTerm t(y, offset, family, phi);
    t.observed_information = observed_information;
    t.log_factorial = log_factorial.size() == y.size() ? log_factorial
                                                       : cached_log_factorial(y);
    return t;
  }

  Matrix joint_precision(const Hyperparams& h) const {
    return assemble_joint_precision(penalty, h.lambda, spatial, h.tau, h.rho, layout,
                                    kFixedEffectPrecision);
  }
};

struct HyperObjective {
  double value = -std::numeric_limits<double>::infinity();
  InnerResult inner;
};

// Laplace-approximated log posterior of the hyperparameters: the evidence
// term plus the hyperprior log-densities (flat prior on log phi).
inline HyperObjective hyper_objective(const Hyperparams& hyper, const AssembledModel& model,
                                      const Vector* warm_start = nullptr,
                                      const NewtonOptions& newton = {},
                                      const HyperpriorSettings& prior = {}) {
  if (hyper.lambda.size() != model.penalty.n_lambda())
    throw std::invalid_argument("hyper_objective: lambda count mismatch");

  const Matrix q = model.joint_precision(hyper);
  const CountDataTerm term = model.data_term(hyper.phi);

  HyperObjective out;
  out.inner = laplace_evidence(term, model.H, q, out.value, warm_start, newton);

  for (Eigen::Index i = 0; i < hyper.lambda.size(); ++i) {
    out.value += gamma_logpdf(hyper.lambda[i], prior.nu / 2.0,
                              prior.nu * hyper.delta_lambda[i] / 2.0);
    out.value += gamma_logpdf(hyper.delta_lambda[i], prior.a, prior.b);
  }
  out.value += gamma_logpdf(hyper.tau, prior.nu / 2.0, prior.nu * hyper.delta_tau / 2.0);
  out.value += gamma_logpdf(hyper.delta_tau, prior.a, prior.b);
  if (hyper.rho.has_value()) out.value += beta_half_logpdf(*hyper.rho);
  return out;
}

struct FitResult {
  Vector xi_mode;
  Matrix sigma;
  Hyperparams hyper;
  BlockLayout layout;
  double dic = 0.0;
  double p_d = 0.0;
  double loglik = 0.0;
  double log_marginal = 0.0;
  bool converged = false;
  int inner_iterations = 0;
  int outer_evaluations = 0;
};

inline std::pair<double, double> compute_dic(double loglik_at_mode, const Matrix& q,
                                             const Matrix& sigma) {
  const double n_xi = static_cast<double>(sigma.rows());
  const double p_d = n_xi - q.cwiseProduct(sigma).sum();
  const double deviance = -2.0 * loglik_at_mode;
  return {deviance + 2.0 * p_d, p_d};
}

struct FitOptions {
  NewtonOptions newton;
  BfgsOptions outer;  // max_evaluations defaults to 200
  HyperpriorSettings prior;
};

namespace detail {

struct HyperTransform {
  int n_lambda = 0;
  bool has_rho = false;
  bool has_phi = false;

  int dim() const { return n_lambda + 1 + (has_rho ? 1 : 0) + (has_phi ? 1 : 0); }

  Vector pack(const Hyperparams& h) const {
    Vector t(dim());
    int k = 0;
    for (int i = 0; i < n_lambda; ++i) t[k++] = std::log(h.lambda[i]);
    t[k++] = std::log(h.tau);
    if (has_rho) t[k++] = std::log(*h.rho / (1.0 - *h.rho));
    if (has_phi) t[k++] = std::log(h.phi);
    return t;
  }

  Hyperparams unpack(const Vector& t) const {
    auto bounded_exp = [](double v) { return std::exp(std::clamp(v, -30.0, 30.0)); };
    Hyperparams h;
    h.lambda.resize(n_lambda);
    int k = 0;
    for (int i = 0; i < n_lambda; ++i) h.lambda[i] = bounded_exp(t[k++]);
    h.tau = bounded_exp(t[k++]);
    if (has_rho) {
      const double v = std::clamp(t[k++], -30.0, 30.0);
      h.rho = 1.0 / (1.0 + std::exp(-v));
    }
    h.phi = has_phi ? bounded_exp(t[k++]) : std::numeric_limits<double>::infinity();
    return h;
  }
};

}  // namespace detail

// Outer optimization of the hyperparameter posterior: BFGS with numerical
// gradients on (log lambda, log tau, logit rho, log phi); the Gamma
// auxiliaries are profiled out in closed form before every evaluation. Inner
// solves warm-start from the most recent successful mode.
inline FitResult hyper_optimize(const AssembledModel& model, Hyperparams initial,
                                const FitOptions& opts = {}) {
  detail::HyperTransform tf;
  tf.n_lambda = model.penalty.n_lambda();
  tf.has_rho = model.spatial.has_correlation();
  tf.has_phi = model.family == Family::NegativeBinomial;

  if (initial.lambda.size() != tf.n_lambda)
    initial = Hyperparams::defaults(tf.n_lambda, tf.has_rho, tf.has_phi);
  if (tf.has_rho && !initial.rho.has_value()) initial.rho = 0.5;
  if (tf.has_phi && !std::isfinite(initial.phi)) initial.phi = 100.0;

  Vector warm;
  bool have_warm = false;

  Hyperparams best_hyper = initial;
  HyperObjective best;
  int failed_evals = 0;

  auto objective = [&](const Vector& t) -> double {
    Hyperparams h = tf.unpack(t);
    h.update_auxiliaries(opts.prior);
    try {
      HyperObjective r =
          hyper_objective(h, model, have_warm ? &warm : nullptr, opts.newton, opts.prior);
      warm = r.inner.xi;
      have_warm = true;
      if (r.value > best.value) {
        best = std::move(r);
        best_hyper = std::move(h);
      }
      return -r.value;
    } catch (const numeric_error&) {
      ++failed_evals;
      return std::numeric_limits<double>::infinity();
    }
  };

  const BfgsResult outer = minimize_fd_bfgs(objective, tf.pack(initial), opts.outer);

  if (!std::isfinite(best.value))
    throw numeric_error("hyperparameter optimization found no feasible point");

  FitResult fit;
  fit.xi_mode = best.inner.xi;
  fit.sigma = best.inner.covariance();
  fit.hyper = best_hyper;
  fit.loglik = best.inner.loglik;
  fit.log_marginal = best.value;
  fit.converged = outer.converged && best.inner.converged;
  fit.inner_iterations = best.inner.iterations;
  fit.outer_evaluations = outer.evaluations;

  const Matrix q = model.joint_precision(best_hyper);
  std::tie(fit.dic, fit.p_d) = compute_dic(best.inner.loglik, q, fit.sigma);
  fit.layout = model.layout;
  return fit;
}

}  // namespace dlnm
