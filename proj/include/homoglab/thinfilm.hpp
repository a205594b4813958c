#pragma once

#include <homoglab/reiterated.hpp>

namespace homoglab {

/// Numerics for the film levels: the 3D inner problem in z and the
/// membrane problem on (0,T)^2 x I.
struct FilmConfig {
  int inner_n = 4;
  int inner_T = 1;
  BoundaryMode inner_bc = BoundaryMode::dirichlet_zero;  // full zero boundary on (0,T)^3
  int membrane_n = 4;
  int membrane_n3 = 0;  // 0 -> 2n
  std::vector<int> T_list = {1, 2, 4};  // lateral-Dirichlet chain (general path)

  SolverConfig inner_solver;
  SolverConfig membrane_solver;

  Real xi_quant_step = 1e-3;
  Real y_quant_step = 1e-9;
  bool taylor_correction = true;
  bool fast_quadratic = true;
  /// Skip the zero-corrector shortcut for integrands without fast in-cell
  /// oscillation (used to cross-check the lifted single-scale route).
  bool force_inner_solves = false;
  std::int64_t max_inner_solves = 2000000;
};

struct FilmInnerResult {
  Real value = 0.0;
  GradMat stress;  // 3x3 average stress of the inner corrector
  bool converged = true;
  bool upper_bound_only = false;
};

namespace detail {

/// Inner film cell density over z in (0,T)^3 at frozen (x, y_alpha): the
/// integrand reads W at y = (y_alpha, z_3) and z_alpha = (z_1, z_2).
inline CellDensity film_inner_cell_density(const FilmIntegrand& W, const Point& x,
                                           const Point& y_alpha) {
  contract(x.size() == 3 && y_alpha.size() == 2, "film inner density needs x in R^3, y_alpha in R^2");
  CellDensity g;
  g.N = 3;
  g.d = 3;
  g.quadratic = W.quadratic;
  g.convex = W.convex;
  g.growth = W.growth;
  auto fx = std::make_shared<Point>(x);
  auto fya = std::make_shared<Point>(wrap_unit(y_alpha));
  const FilmIntegrand* wp = &W;
  auto args = [fx, fya](const Point& z) {
    Point y(3), za(2);
    y << (*fya)[0], (*fya)[1], z[2];
    za << z[0], z[1];
    return std::make_pair(y, za);
  };
  g.value = [wp, fx, args](const Point& z, const GradMat& zeta) {
    auto [y, za] = args(z);
    return wp->eval(*fx, y, za, zeta);
  };
  g.value_stress = [wp, fx, args](const Point& z, const GradMat& zeta) {
    auto [y, za] = args(z);
    return std::make_pair(wp->eval(*fx, y, za, zeta), wp->stress(*fx, y, za, zeta));
  };
  if (W.quadratic)
    g.quad_at = [wp, fx, args](const Point& z) {
      auto [y, za] = args(z);
      return wp->quad_form(*fx, y, za);
    };
  return g;
}

inline bool film_inner_is_trivial(const FilmIntegrand& W, const FilmConfig& cfg) {
  // No dependence on the in-cell variables (z_alpha, z_3 -> y_3): the inner
  // corrector is zero for convex W.
  return !cfg.force_inner_solves && W.convex && !W.depends_on_z && !W.depends_on_y3;
}

}  // namespace detail

/// Effective 3D density of the fastest film scale: one full-Dirichlet cell
/// solve over (0,T)^3 (quadratic integrands: periodic corrector tensor,
/// exact in xi).
inline FilmInnerResult film_inner_density(const FilmIntegrand& W, const Point& x,
                                          const Point& y_alpha, const GradMat& xi,
                                          const FilmConfig& cfg = {}) {
  contract(xi.rows() == 3 && xi.cols() == 3, "film inner density needs a 3x3 xi");
  FilmInnerResult out;
  if (detail::film_inner_is_trivial(W, cfg)) {
    Point y(3), za(2);
    y << wrap_unit(y_alpha[0]), wrap_unit(y_alpha[1]), 0.0;
    za << 0.0, 0.0;
    out.value = W.eval(x, y, za, xi);
    out.stress = W.stress(x, y, za, xi);
    return out;
  }
  CellDensity g = detail::film_inner_cell_density(W, x, y_alpha);
  if (W.quadratic && cfg.fast_quadratic) {
    CellGrid grid{3, 1, cfg.inner_n, BoundaryMode::periodic_mean_zero};
    EffectiveTensor t = quadratic_corrector_tensor(g.quad_at, grid, cfg.inner_solver);
    out.value = t.value(xi);
    out.stress = t.stress(xi);
    return out;
  }
  CellGrid grid{3, cfg.inner_T, cfg.inner_n, cfg.inner_bc};
  CellSolution s = solve_cell(g, xi, grid, cfg.inner_solver);
  out.value = s.value;
  out.stress = s.avg_stress;
  out.converged = s.converged;
  out.upper_bound_only = s.upper_bound_only;
  return out;
}

struct MembraneEstimate {
  Real value = 0.0;
  GradMat avg_stress;  // 3x2 derivative in xi_bar
  std::vector<std::pair<int, Real>> per_T;
  Real corrector_sup = 0.0;
  std::int64_t iterations = 0;
  std::int64_t inner_solve_count = 0;
  std::int64_t cache_hits = 0;
  bool converged = true;
  bool upper_bound_only = false;
  bool monotone_ok = true;
  Real growth_lower_margin = 0.0;
  Real growth_upper_margin = 0.0;
};

namespace detail {

/// Membrane-level point density: at a slab point y = (y_alpha, y_3) the
/// integrand is the inner film density at x = (x_alpha, y_3), y_alpha.
class MembranePointDensity {
 public:
  MembranePointDensity(const FilmIntegrand& W, Point x_alpha, const FilmConfig& cfg, Real xi_scale,
                       std::shared_ptr<InnerDensityCache> cache,
                       std::shared_ptr<NestedStats> stats)
      : W_(&W), x_alpha_(std::move(x_alpha)), cfg_(cfg), cache_(std::move(cache)),
        stats_(std::move(stats)) {
    xi_step_abs_ = cfg_.xi_quant_step > 0.0 ? cfg_.xi_quant_step * (1.0 + xi_scale) : 0.0;
    trivial_ = film_inner_is_trivial(*W_, cfg_);
    if (W_->quadratic && cfg_.fast_quadratic)
      tensor_cache_ = std::make_shared<std::map<std::array<std::int64_t, 3>, EffectiveTensor>>();
  }

  CellDensity as_cell_density() const {
    CellDensity g;
    g.N = 3;
    g.d = 3;
    g.convex = W_->convex;
    g.growth = W_->growth;
    if (trivial_ && W_->quadratic) {
      g.quadratic = true;
      g.quad_at = [this](const Point& y) {
        auto [x, ya, za] = slab_args(y);
        return W_->quad_form(x, ya, za);
      };
      g.value = [this](const Point& y, const GradMat& eta) {
        auto [x, ya, za] = slab_args(y);
        return W_->eval(x, ya, za, eta);
      };
      g.value_stress = [this](const Point& y, const GradMat& eta) {
        auto [x, ya, za] = slab_args(y);
        return std::make_pair(W_->eval(x, ya, za, eta), W_->stress(x, ya, za, eta));
      };
      return g;
    }
    if (trivial_) {
      g.quadratic = false;
      g.value = [this](const Point& y, const GradMat& eta) {
        auto [x, ya, za] = slab_args(y);
        return W_->eval(x, ya, za, eta);
      };
      g.value_stress = [this](const Point& y, const GradMat& eta) {
        auto [x, ya, za] = slab_args(y);
        return std::make_pair(W_->eval(x, ya, za, eta), W_->stress(x, ya, za, eta));
      };
      return g;
    }
    if (tensor_cache_) {
      g.quadratic = true;
      g.quad_at = [this](const Point& y) { return tensor_at(y).form; };
      g.value = [this](const Point& y, const GradMat& eta) { return tensor_at(y).value(eta); };
      g.value_stress = [this](const Point& y, const GradMat& eta) {
        const EffectiveTensor& t = tensor_at(y);
        return std::make_pair(t.value(eta), t.stress(eta));
      };
      return g;
    }
    g.quadratic = false;
    g.value = [this](const Point& y, const GradMat& eta) { return nested_eval(y, eta).first; };
    g.value_stress = [this](const Point& y, const GradMat& eta) { return nested_eval(y, eta); };
    return g;
  }

 private:
  std::tuple<Point, Point, Point> slab_args(const Point& y) const {
    Point x(3), ya(3), za(2);
    x << x_alpha_[0], x_alpha_[1], y[2];
    ya << wrap_unit(y[0]), wrap_unit(y[1]), 0.0;
    za << 0.0, 0.0;
    return {x, ya, za};
  }

  std::array<std::int64_t, 3> y_key(const Point& y) const {
    return {quant_key(wrap_unit(y[0]), cfg_.y_quant_step),
            quant_key(wrap_unit(y[1]), cfg_.y_quant_step),
            quant_key(y[2], cfg_.y_quant_step)};
  }

  Point frozen_x(const Point& y) const {
    Point x(3);
    x << x_alpha_[0], x_alpha_[1], y[2];
    return x;
  }
  Point frozen_yalpha(const Point& y) const {
    Point ya(2);
    ya << wrap_unit(y[0]), wrap_unit(y[1]);
    return ya;
  }

  const EffectiveTensor& tensor_at(const Point& y) const {
    const auto key = y_key(y);
    auto it = tensor_cache_->find(key);
    if (it != tensor_cache_->end()) {
      ++stats_->hits;
      return it->second;
    }
    if (stats_->budget > 0 && stats_->solves >= stats_->budget) throw BudgetExhausted{};
    ++stats_->solves;
    CellDensity g = film_inner_cell_density(*W_, frozen_x(y), frozen_yalpha(y));
    CellGrid grid{3, 1, cfg_.inner_n, BoundaryMode::periodic_mean_zero};
    EffectiveTensor t = quadratic_corrector_tensor(g.quad_at, grid, cfg_.inner_solver);
    return tensor_cache_->emplace(key, std::move(t)).first->second;
  }

  std::pair<Real, GradMat> nested_eval(const Point& y, const GradMat& eta) const {
    InnerKey key;
    key.y = y_key(y);
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      key.xi[std::size_t(i)] = quant_key(eta.data()[i], xi_step_abs_);
    std::optional<InnerEntry> hit = cache_->lookup(key);
    if (!hit) {
      if (stats_->budget > 0 && stats_->solves >= stats_->budget) throw BudgetExhausted{};
      ++stats_->solves;
      GradMat eta_q(3, 3);
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        eta_q.data()[i] = dequant(key.xi[std::size_t(i)], xi_step_abs_, eta.data()[i]);
      CellDensity g = film_inner_cell_density(*W_, frozen_x(y), frozen_yalpha(y));
      CellGrid grid{3, cfg_.inner_T, cfg_.inner_n, cfg_.inner_bc};
      CellSolution s = solve_cell(g, eta_q, grid, cfg_.inner_solver);
      if (!s.converged) stats_->unconverged = true;
      InnerEntry e;
      e.value = s.value;
      e.stress = s.avg_stress;
      e.eta_q = eta_q;
      hit = cache_->insert(key, std::move(e));
    } else {
      ++stats_->hits;
    }
    Real v = hit->value;
    if (cfg_.taylor_correction && xi_step_abs_ > 0.0) {
      const GradMat diff = eta - hit->eta_q;
      v += (hit->stress.array() * diff.array()).sum();
    }
    return {v, hit->stress};
  }

  const FilmIntegrand* W_;
  Point x_alpha_;
  FilmConfig cfg_;
  Real xi_step_abs_ = 0.0;
  bool trivial_ = false;
  std::shared_ptr<InnerDensityCache> cache_;
  std::shared_ptr<NestedStats> stats_;
  std::shared_ptr<std::map<std::array<std::int64_t, 3>, EffectiveTensor>> tensor_cache_;
};

}  // namespace detail

/// Membrane effective density: minimize
///   (1/(2 T^2)) int_{(0,T)^2 x I} W_hom(x_alpha, y_3, y_alpha;
///                                       xi_bar + grad_alpha phi | grad_3 phi)
/// over fields clamped on the lateral boundary and free on top/bottom.
/// Quadratic integrands run on the in-plane periodic unit cell (convex
/// single-cell equivalence); the general path walks the lateral-Dirichlet
/// T chain from above.
inline MembraneEstimate membrane_density(const FilmIntegrand& W, const Point& x_alpha,
                                         const GradMat& xi_bar, const FilmConfig& cfg = {}) {
  contract(xi_bar.rows() == 3 && xi_bar.cols() == 2, "xi_bar must be 3x2");
  contract(x_alpha.size() == 2, "x_alpha must be in R^2");

  GradMat xi3 = GradMat::Zero(3, 3);
  xi3.leftCols(2) = xi_bar;

  auto cache = std::make_shared<InnerDensityCache>();
  auto stats = std::make_shared<detail::NestedStats>();
  stats->budget = cfg.max_inner_solves;
  detail::MembranePointDensity nested(W, x_alpha, cfg, xi_bar.norm(), cache, stats);
  CellDensity g = nested.as_cell_density();

  SolverConfig solver = cfg.membrane_solver;
  if (!g.quadratic && !detail::film_inner_is_trivial(W, cfg) && cfg.xi_quant_step > 0.0) {
    if (solver.stall_tol <= 0.0) solver.stall_tol = 100.0 * cfg.xi_quant_step;
    if (solver.progress_tol <= 0.0)
      solver.progress_tol = 10.0 * cfg.xi_quant_step * cfg.xi_quant_step;
  }

  MembraneEstimate est;
  est.upper_bound_only = !W.convex;
  est.value = std::numeric_limits<Real>::quiet_NaN();

  const bool fast = g.quadratic && cfg.fast_quadratic;
  std::vector<int> T_list = fast ? std::vector<int>{1} : cfg.T_list;
  for (int T : T_list) {
    try {
      FilmGrid grid;
      grid.T = T;
      grid.n = cfg.membrane_n;
      grid.n3 = cfg.membrane_n3;
      grid.bc = fast ? BoundaryMode::periodic_mean_zero : BoundaryMode::lateral_dirichlet;
      CellSolution sol = detail::solve_on_mesh(g, xi3, grid.mesh(), solver);
      est.per_T.emplace_back(T, sol.value);
      est.value = sol.value;
      est.avg_stress = sol.avg_stress.leftCols(2);
      est.corrector_sup = sol.corrector.sup_norm();
      est.iterations = sol.iterations;
      if (!sol.converged) est.converged = false;
    } catch (const detail::BudgetExhausted&) {
      est.converged = false;
      break;
    }
  }
  if (!fast && est.per_T.size() > 1) {
    const Real tol = 2.0 * std::max(solver.grad_tol_rel * (1.0 + std::abs(est.value)),
                                    solver.quad_tol);
    for (std::size_t i = 1; i < est.per_T.size(); ++i)
      if (est.per_T[i].second > est.per_T[i - 1].second + tol) est.monotone_ok = false;
  }
  est.inner_solve_count = stats->solves;
  est.cache_hits = stats->hits;
  if (stats->unconverged) est.converged = false;

  if (std::isfinite(est.value)) {
    est.growth_lower_margin = est.value - W.growth.lower(xi_bar);
    est.growth_upper_margin = W.growth.upper(xi_bar) - est.value;
    const Real slack = 1e-9 * (1.0 + std::abs(est.value));
    if (est.growth_lower_margin < -slack || est.growth_upper_margin < -slack)
      throw ContractViolation("membrane density violates its growth envelope");
  }
  return est;
}

/// Constant-coefficient membrane density in closed form: minimize the SPD
/// quadratic form over the constant transverse column, i.e. the Schur
/// complement of the transverse block. C acts on vec(xi) with the in-plane
/// entries first (indices 0..5) and the third column last (6..8).
inline Real schur_membrane_oracle(const QuadForm& C, const GradMat& xi_bar) {
  contract(C.rows() == 9 && C.cols() == 9, "membrane oracle needs a 9x9 form");
  contract(C.isApprox(C.transpose(), 1e-10), "membrane oracle form must be symmetric");
  contract(xi_bar.rows() == 3 && xi_bar.cols() == 2, "xi_bar must be 3x2");
  {
    Eigen::LLT<QuadForm> llt(C);
    contract(llt.info() == Eigen::Success, "membrane oracle form must be positive definite");
  }
  const Eigen::Matrix<Real, 6, 6> Cpp = C.topLeftCorner(6, 6);
  const Eigen::Matrix<Real, 6, 3> Cpb = C.topRightCorner(6, 3);
  const Eigen::Matrix<Real, 3, 3> Cbb = C.bottomRightCorner(3, 3);
  Eigen::LLT<Eigen::Matrix<Real, 3, 3>> llt_bb(Cbb);
  contract(llt_bb.info() == Eigen::Success, "transverse block must be positive definite");
  const Eigen::Map<const Eigen::Matrix<Real, 6, 1>> p(xi_bar.data());
  const Eigen::Matrix<Real, 3, 1> b_opt = -llt_bb.solve(Cpb.transpose() * p);
  return p.dot(Cpp * p) + 2.0 * p.dot(Cpb * b_opt) + b_opt.dot(Cbb * b_opt);
}

/// Single-scale film: W independent of z_alpha, homogenization only in the
/// unit-periodic (y_alpha, y_3). Same membrane machinery; the inner level
/// sees a z_alpha-constant integrand.
inline MembraneEstimate corollary_single_scale(const FilmIntegrand& W, const Point& x_alpha,
                                               const GradMat& xi_bar, const FilmConfig& cfg = {}) {
  contract(!W.depends_on_z, "single-scale film corollary requires W independent of z_alpha");
  return membrane_density(W, x_alpha, xi_bar, cfg);
}

}  // namespace homoglab
