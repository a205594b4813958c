#pragma once

#include <homoglab/thinfilm.hpp>

#include <chrono>

namespace homoglab {

/// Direct epsilon-resolved simulation setup. Commensurate scales (1/eps and
/// 1/eps^2 integer) keep every oscillation period complete inside the
/// domain, and the mesh resolves the fastest scale with at least
/// points_per_fine_period elements.
struct DirectSimConfig {
  Real eps = 0.25;
  int points_per_fine_period = 8;
  SolverConfig solver;
  bool record_timings = false;

  void validate() const {
    contract(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
    const Real inv = 1.0 / eps, inv2 = 1.0 / (eps * eps);
    contract(std::abs(inv - std::round(inv)) < 1e-9 && std::abs(inv2 - std::round(inv2)) < 1e-9,
             "eps must make 1/eps and 1/eps^2 integers (commensurate periods)");
    contract(points_per_fine_period >= 4, "points_per_fine_period must be >= 4");
  }
  std::int64_t fine_elements() const {
    return std::int64_t(std::llround(points_per_fine_period / (eps * eps)));
  }
};

namespace detail {

inline CellDensity direct_density_1d(const MultiscaleIntegrand& f, Real eps) {
  contract(f.N == 1 && f.d == 1, "1D direct simulation needs N = d = 1");
  CellDensity g;
  g.N = 1;
  g.d = 1;
  g.quadratic = f.quadratic;
  g.convex = f.convex;
  g.growth = f.growth;
  const MultiscaleIntegrand* fp = &f;
  auto args = [eps](const Point& xp) {
    Point y(1), z(1);
    y[0] = xp[0] / eps;
    z[0] = xp[0] / (eps * eps);
    return std::make_pair(y, z);
  };
  g.value = [fp, args](const Point& xp, const GradMat& eta) {
    auto [y, z] = args(xp);
    return fp->eval(xp, y, z, eta);
  };
  g.value_stress = [fp, args](const Point& xp, const GradMat& eta) {
    auto [y, z] = args(xp);
    return std::make_pair(fp->eval(xp, y, z, eta), fp->stress(xp, y, z, eta));
  };
  if (f.quadratic)
    g.quad_at = [fp, args](const Point& xp) {
      auto [y, z] = args(xp);
      return fp->quad_form(xp, y, z);
    };
  return g;
}

}  // namespace detail

/// Minimum of int_0^1 f(x, x/eps, x/eps^2; u'(x)) dx over u(0) = 0,
/// u(1) = xi (affine lift + zero-boundary fluctuation).
inline Real minimize_F_eps_1d(const MultiscaleIntegrand& f, Real xi, const DirectSimConfig& cfg) {
  cfg.validate();
  TensorMesh mesh;
  mesh.N = 1;
  mesh.elems = {int(cfg.fine_elements()), 1, 1};
  mesh.h = {1.0 / Real(cfg.fine_elements()), 1.0, 1.0};
  mesh.origin = {0.0, 0.0, 0.0};
  mesh.bc = {AxisBC::dirichlet, AxisBC::dirichlet, AxisBC::dirichlet};
  GradMat xi_m(1, 1);
  xi_m(0, 0) = xi;
  CellDensity g = detail::direct_density_1d(f, cfg.eps);
  // Total energy over a unit interval: average equals integral.
  CellSolution sol = detail::solve_on_mesh(g, xi_m, mesh, cfg.solver);
  if (!sol.converged)
    throw SolverError("direct 1D minimization did not converge (residual " +
                      std::to_string(sol.grad_norm) + ")");
  return sol.value;
}

/// Minimum of the homogenized functional over the same boundary-value class.
/// x-independent densities minimize with the affine map directly; for
/// x-dependent scalar quadratic densities the classical 1D formula
/// (int 1/a_hom(x) dx)^{-1} xi^2 is evaluated by fixed-order quadrature.
inline Real minimize_F_hom_1d(const MultiscaleIntegrand& f, Real xi, const ReiterateConfig& rcfg,
                              int x_elements = 16) {
  contract(f.N == 1 && f.d == 1, "1D homogenized minimum needs N = d = 1");
  GradMat xi_m(1, 1);
  xi_m(0, 0) = xi;
  if (!f.depends_on_x) {
    Point x0 = Point::Zero(1);
    return outer_density(f, x0, xi_m, rcfg).value;
  }
  contract(f.quadratic, "x-dependent homogenized minimum implemented for quadratic densities");
  // a_hom(x) from unit-slope effective densities at the quadrature points.
  GradMat one(1, 1);
  one(0, 0) = 1.0;
  const Real gauss[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
  Real inv_integral = 0.0;
  for (int e = 0; e < x_elements; ++e)
    for (int q = 0; q < 2; ++q) {
      Point xq(1);
      xq[0] = (e + gauss[q]) / Real(x_elements);
      const Real a = outer_density(f, xq, one, rcfg).value;
      inv_integral += 0.5 / Real(x_elements) / a;
    }
  return xi * xi / inv_integral;
}

struct GammaGapRow {
  Real eps = 0.0;
  Real min_F_eps = 0.0;
  Real min_F_hom = 0.0;
  Real gap = 0.0;
  std::int64_t dofs = 0;
  Real wall_time_ms = 0.0;
  std::string error;  // non-empty when this row failed
};

struct GammaGapReport {
  std::vector<GammaGapRow> rows;
  bool gaps_decreasing = true;  // weakly, with 10% jitter allowance
  bool final_gap_ok = false;    // final relative gap under `rel_tol`
  Real rel_tol = 0.02;

  bool verdict() const { return gaps_decreasing && final_gap_ok; }
};

/// Energy-gap table |min F_eps - min F_hom| over a decreasing eps chain.
/// Rows are independent; failures are recorded and the report continues.
inline GammaGapReport gamma_gap_report(const MultiscaleIntegrand& f, Real xi,
                                       const std::vector<Real>& eps_list,
                                       const DirectSimConfig& cfg_template,
                                       const ReiterateConfig& rcfg = {}, Real rel_tol = 0.02,
                                       int threads = 1) {
  contract(!eps_list.empty(), "eps_list must be nonempty");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    contract(eps_list[i] < eps_list[i - 1], "eps_list must be strictly decreasing");

  const Real min_hom = minimize_F_hom_1d(f, xi, rcfg);
  GammaGapReport report;
  report.rel_tol = rel_tol;
  report.rows.resize(eps_list.size());
  parallel_for_indexed(eps_list.size(), threads, [&](std::size_t i) {
    GammaGapRow& row = report.rows[i];
    row.eps = eps_list[i];
    row.min_F_hom = min_hom;
    DirectSimConfig cfg = cfg_template;
    cfg.eps = eps_list[i];
    try {
      cfg.validate();
      const auto t0 = std::chrono::steady_clock::now();
      row.min_F_eps = minimize_F_eps_1d(f, xi, cfg);
      if (cfg.record_timings) {
        row.wall_time_ms = std::chrono::duration<Real, std::milli>(
                               std::chrono::steady_clock::now() - t0).count();
      }
      row.gap = std::abs(row.min_F_eps - min_hom);
      row.dofs = cfg.fine_elements();  // 1/h mesh-resolution accounting
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });

  const Real floor = 1e-12 * (1.0 + std::abs(min_hom));
  const GammaGapRow* prev = nullptr;
  for (const auto& row : report.rows) {
    if (!row.error.empty()) {
      report.gaps_decreasing = false;
      continue;
    }
    if (prev && row.gap > 1.1 * prev->gap + floor) report.gaps_decreasing = false;
    prev = &row;
  }
  if (!report.rows.empty() && report.rows.back().error.empty())
    report.final_gap_ok =
        report.rows.back().gap < rel_tol * std::max(std::abs(min_hom), Real(1e-30));
  return report;
}

/// Rescaled film energy on the 2D strip slice [0,1] x I: minimize
///   int W(x, x/eps, x_1/eps^2; d_1 v | 0 | (1/eps) d_3 v) dx
/// with v = xi_col * x_1 on the lateral edges, free top/bottom. Returns the
/// total (not thickness-normalized) energy; the homogenized prediction is
/// 2 * membrane density.
inline Real minimize_film_eps_strip(const FilmIntegrand& W, const Eigen::Vector3d& xi_col,
                                    const DirectSimConfig& cfg) {
  cfg.validate();
  const Real eps = cfg.eps;
  const std::int64_t m1 = cfg.fine_elements();
  const std::int64_t m3 = std::llround(2.0 * cfg.points_per_fine_period / eps);

  TensorMesh mesh;
  mesh.N = 2;
  mesh.elems = {int(m1), int(m3), 1};
  mesh.h = {1.0 / Real(m1), 2.0 / Real(m3), 1.0};
  mesh.origin = {0.0, -1.0, 0.0};
  mesh.bc = {AxisBC::dirichlet, AxisBC::free_ends, AxisBC::dirichlet};

  // Gradient-to-argument map: eta (3x2, columns d_1 v | d_3 v) ->
  // M = (d_1 v | 0 | (1/eps) d_3 v).
  auto lift = [eps](const GradMat& eta) {
    GradMat M = GradMat::Zero(3, 3);
    M.col(0) = eta.col(0);
    M.col(2) = eta.col(1) / eps;
    return M;
  };
  Eigen::Matrix<Real, 9, 6> S = Eigen::Matrix<Real, 9, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    S(i, i) = 1.0;              // column 0 -> column 0
    S(6 + i, 3 + i) = 1.0 / eps;  // column 1 -> column 2, scaled
  }
  auto args = [eps](const Point& xp) {
    Point x(3), y(3), za(2);
    x << xp[0], 0.0, xp[1];
    y << xp[0] / eps, 0.0, xp[1] / eps;
    za << xp[0] / (eps * eps), 0.0;
    return std::make_pair(std::make_pair(x, y), za);
  };

  CellDensity g;
  g.N = 2;
  g.d = 3;
  g.quadratic = W.quadratic;
  g.convex = W.convex;
  g.growth = W.growth;
  const FilmIntegrand* wp = &W;
  g.value = [wp, args, lift](const Point& xp, const GradMat& eta) {
    auto [xy, za] = args(xp);
    return wp->eval(xy.first, xy.second, za, lift(eta));
  };
  g.value_stress = [wp, args, lift, eps](const Point& xp, const GradMat& eta) {
    auto [xy, za] = args(xp);
    const GradMat M = lift(eta);
    const Real v = wp->eval(xy.first, xy.second, za, M);
    const GradMat s3 = wp->stress(xy.first, xy.second, za, M);
    GradMat s(3, 2);
    s.col(0) = s3.col(0);
    s.col(1) = s3.col(2) / eps;
    return std::make_pair(v, s);
  };
  if (W.quadratic)
    g.quad_at = [wp, args, S](const Point& xp) {
      auto [xy, za] = args(xp);
      const QuadForm C = wp->quad_form(xy.first, xy.second, za);
      return QuadForm(S.transpose() * C * S);
    };

  GradMat xi_m = GradMat::Zero(3, 2);
  xi_m.col(0) = xi_col;
  CellSolution sol = detail::solve_on_mesh(g, xi_m, mesh, cfg.solver);
  if (!sol.converged)
    throw SolverError("film strip minimization did not converge (residual " +
                      std::to_string(sol.grad_norm) + ")");
  // solve_on_mesh averages over the strip (measure 2); the rescaled energy
  // is the integral.
  return sol.value * mesh.volume();
}

}  // namespace homoglab
