#pragma once

#include <homoglab/common.hpp>

#include <deque>
#include <functional>

namespace homoglab {

struct MinimizeOptions {
  Real grad_tol_abs = 1e-12;
  Real grad_tol_rel = 1e-7;   // stop when |g| <= max(abs, rel*(1+|f|))
  /// Gradient level below which a failed line search still counts as
  /// converged. Used by callers whose objective carries a known evaluation
  /// noise floor (quantized nested densities); 0 disables it.
  Real stall_tol = 0.0;
  /// Noise-floor stop: converged once the decrease over `progress_window`
  /// iterations falls below progress_tol*(1+|f|). 0 disables it.
  Real progress_tol = 0.0;
  int progress_window = 16;
  std::int64_t max_iterations = 10000;
  int history = 8;
  int max_line_steps = 48;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  Real value = 0.0;
  Real grad_norm = 0.0;
  std::int64_t iterations = 0;
  bool converged = false;
  bool stalled = false;  // line search exhausted above the plain tolerance
};

/// Limited-memory BFGS with Armijo backtracking. `fg(x, g)` returns the
/// objective and fills the gradient. `post_step` (optional) re-projects the
/// iterate after each accepted step (periodic mean-zero gauge).
template <class Fg>
MinimizeResult lbfgs_minimize(Fg&& fg, Eigen::VectorXd x0, const MinimizeOptions& opt,
                              const std::function<void(Eigen::VectorXd&)>& post_step = {}) {
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  if (post_step) post_step(x0);
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd g(n), g_new(n), x_new(n), dir(n);
  Real f = fg(x, g);
  if (!std::isfinite(f) || !g.allFinite())
    throw EvalError("objective is non-finite at the initial iterate");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<Real> rho_hist;
  Real gamma = 1.0;

  auto tol_at = [&](Real fval) {
    return std::max(opt.grad_tol_abs, opt.grad_tol_rel * (1.0 + std::abs(fval)));
  };

  std::deque<Real> recent_f;
  for (std::int64_t it = 0; it < opt.max_iterations; ++it) {
    res.iterations = it;
    const Real gnorm = g.norm();
    if (gnorm <= tol_at(f)) {
      res.converged = true;
      break;
    }
    if (opt.progress_tol > 0.0) {
      recent_f.push_back(f);
      if (int(recent_f.size()) > opt.progress_window) recent_f.pop_front();
      if (int(recent_f.size()) == opt.progress_window &&
          recent_f.front() - f <= opt.progress_tol * (1.0 + std::abs(f))) {
        res.converged = true;
        break;
      }
    }

    // Two-loop recursion.
    dir = -g;
    std::vector<Real> alpha(s_hist.size());
    for (int i = int(s_hist.size()) - 1; i >= 0; --i) {
      alpha[std::size_t(i)] = rho_hist[std::size_t(i)] * s_hist[std::size_t(i)].dot(dir);
      dir -= alpha[std::size_t(i)] * y_hist[std::size_t(i)];
    }
    dir *= gamma;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const Real beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha[i] - beta) * s_hist[i];
    }
    Real slope = g.dot(dir);
    if (!(slope < 0.0)) {  // not a descent direction: restart from steepest descent
      dir = -g;
      slope = -gnorm * gnorm;
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      gamma = 1.0;
    }

    // Armijo backtracking.
    const Real c1 = 1e-4;
    Real step = 1.0;
    Real f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < opt.max_line_steps; ++ls) {
      x_new = x + step * dir;
      if (post_step) post_step(x_new);
      f_new = fg(x_new, g_new);
      if (std::isnan(f_new) || g_new.hasNaN())
        throw EvalError("objective produced NaN during line search");
      if (f_new <= f + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.stalled = true;
      res.converged = (opt.stall_tol > 0.0 && gnorm <= opt.stall_tol * (1.0 + std::abs(f)));
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    const Real sy = s.dot(yv);
    if (sy > 1e-14 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      gamma = sy / y_hist.back().squaredNorm();
      if (int(s_hist.size()) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
  }

  res.x = std::move(x);
  res.value = f;
  res.grad_norm = g.norm();
  if (!res.converged && res.grad_norm <= tol_at(f)) res.converged = true;
  return res;
}

}  // namespace homoglab
