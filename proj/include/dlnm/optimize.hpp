#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "dlnm/common.hpp"

namespace dlnm {

struct BfgsOptions {
  int max_iterations = 60;
  int max_evaluations = 200;
  double grad_tol = 1e-2;   // sup-norm of the finite-difference gradient
  double f_tol = 1e-10;     // relative objective change
  double fd_step = 1e-4;
};

struct BfgsResult {
  Vector x;
  double f = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

// Quasi-Newton minimizer with forward-difference gradients, for smooth
// low-dimensional objectives that are expensive to evaluate. The objective
// may return +inf to mark infeasible points; the line search backs off.
template <class F>
BfgsResult minimize_fd_bfgs(F&& objective, Vector x0, const BfgsOptions& opts = {}) {
  const double inf = std::numeric_limits<double>::infinity();
  const int dim = static_cast<int>(x0.size());

  BfgsResult res;
  res.x = std::move(x0);

  auto eval = [&](const Vector& x) -> double {
    ++res.evaluations;
    const double v = objective(x);
    return std::isnan(v) ? inf : v;
  };

  res.f = eval(res.x);
  if (!std::isfinite(res.f))
    throw numeric_error("bfgs: objective not finite at the starting point");

  auto fd_gradient = [&](const Vector& x, double fx, Vector& g) -> bool {
    for (int i = 0; i < dim; ++i) {
      if (res.evaluations >= opts.max_evaluations) return false;
      Vector xp = x;
      xp[i] += opts.fd_step;
      double fp = eval(xp);
      if (!std::isfinite(fp)) {  // fall back to a backward step
        xp[i] = x[i] - opts.fd_step;
        fp = eval(xp);
        g[i] = std::isfinite(fp) ? (fx - fp) / opts.fd_step : 0.0;
      } else {
        g[i] = (fp - fx) / opts.fd_step;
      }
    }
    return true;
  };

  Vector g(dim);
  if (!fd_gradient(res.x, res.f, g)) return res;
  if (g.cwiseAbs().maxCoeff() < opts.grad_tol) {
    res.converged = true;
    return res;
  }

  Matrix b = Matrix::Identity(dim, dim);  // inverse Hessian approximation

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    Vector direction = -(b * g);
    double slope = direction.dot(g);
    if (slope >= 0.0) {  // lost curvature information, restart from steepest descent
      b.setIdentity();
      direction = -g;
      slope = direction.dot(g);
    }

    double step = 1.0;
    double f_new = inf;
    Vector x_new;
    bool accepted = false;
    for (int ls = 0; ls < 20 && res.evaluations < opts.max_evaluations; ++ls) {
      x_new = res.x + step * direction;
      f_new = eval(x_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = g.cwiseAbs().maxCoeff() < 10.0 * opts.grad_tol;
      return res;
    }

    Vector g_new(dim);
    if (!fd_gradient(x_new, f_new, g_new)) {
      res.x = x_new;
      res.f = f_new;
      return res;
    }

    const Vector s = x_new - res.x;
    const Vector yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      const Vector bs = b * yv;
      const double scale = (sy + yv.dot(bs)) / (sy * sy);
      b += scale * (s * s.transpose());
      const Matrix cross = (bs * s.transpose()) / sy;
      b -= cross + cross.transpose();
    }

    const double rel_change = std::abs(res.f - f_new) / (1.0 + std::abs(f_new));
    res.x = x_new;
    res.f = f_new;
    g = g_new;

    if (g.cwiseAbs().maxCoeff() < opts.grad_tol || rel_change < opts.f_tol) {
      res.converged = true;
      return res;
    }
    if (res.evaluations >= opts.max_evaluations) return res;
  }
  return res;
}

}  // namespace dlnm
