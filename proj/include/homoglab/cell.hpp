#pragma once

#include <homoglab/fem.hpp>
#include <homoglab/integrand.hpp>
#include <homoglab/lbfgs.hpp>

#include <optional>
#include <utility>
#include <vector>

namespace homoglab {

struct SolverConfig {
  Real quad_tol = 1e-10;      // gradient-norm target on the quadratic path
  Real grad_tol_rel = 1e-7;   // general path: |g| <= rel*(1+|value|)
  Real grad_tol_abs = 1e-12;
  Real stall_tol = 0.0;       // noise floor forwarded to the line search
  Real progress_tol = 0.0;    // noise-floor progress stop (see MinimizeOptions)
  int progress_window = 16;
  std::int64_t max_iter_factor = 10;  // max iterations = factor * unknowns
  int restarts = 8;           // extra seeded starts for nonconvex densities
  std::uint64_t seed = 1;
  bool force_generic = false; // bypass the assembled quadratic fast path

  MinimizeOptions minimize_options(std::int64_t unknowns) const {
    MinimizeOptions o;
    o.grad_tol_abs = grad_tol_abs;
    o.grad_tol_rel = grad_tol_rel;
    o.stall_tol = stall_tol;
    o.progress_tol = progress_tol;
    o.progress_window = progress_window;
    o.max_iterations = std::max<std::int64_t>(256, max_iter_factor * std::max<std::int64_t>(1, unknowns));
    return o;
  }
};

/// Single-scale density g(z; eta) with frozen slow variables.
struct CellDensity {
  int N = 1;
  int d = 1;
  bool quadratic = false;
  bool convex = true;
  GrowthSpec growth;
  std::function<Real(const Point&, const GradMat&)> value;
  std::function<std::pair<Real, GradMat>(const Point&, const GradMat&)> value_stress;
  std::function<QuadForm(const Point&)> quad_at;  // quadratic families only

  PointDensity point_density() const { return PointDensity{value, value_stress}; }
};

/// Freeze (x, y) of a bulk integrand: the inner cell problem sees only z.
inline CellDensity freeze_inner(const MultiscaleIntegrand& f, Point x, Point y) {
  CellDensity g;
  g.N = f.N;
  g.d = f.d;
  g.quadratic = f.quadratic;
  g.convex = f.convex;
  g.growth = f.growth;
  auto fx = std::make_shared<Point>(std::move(x));
  auto fy = std::make_shared<Point>(wrap_unit(y));
  const MultiscaleIntegrand* fp = &f;
  g.value = [fp, fx, fy](const Point& z, const GradMat& eta) { return fp->eval(*fx, *fy, z, eta); };
  g.value_stress = [fp, fx, fy](const Point& z, const GradMat& eta) {
    return std::make_pair(fp->eval(*fx, *fy, z, eta), fp->stress(*fx, *fy, z, eta));
  };
  if (f.quadratic)
    g.quad_at = [fp, fx, fy](const Point& z) { return fp->quad_form(*fx, *fy, z); };
  return g;
}

struct CellSolution {
  Real value = 0.0;                  // (1/|cell|) * discrete energy at the minimizer
  CorrectorField corrector;          // mean-projected in gauge-free modes
  Real grad_norm = 0.0;
  std::int64_t iterations = 0;
  GradMat avg_stress;                // (1/|cell|) * sum_q w_q dF/dxi
  bool converged = false;
  bool upper_bound_only = false;     // nonconvex density: value is an upper bound
  Real zero_corrector_value = 0.0;   // energy of phi = 0 (never undercut)
};

namespace detail {

inline CellSolution solve_on_mesh(const CellDensity& g, const GradMat& xi, const TensorMesh& mesh,
                                  const SolverConfig& cfg) {
  contract(xi.rows() == g.d && xi.cols() == g.N, "xi must be d x N for this density");
  const DofMap dofs(mesh, g.d);
  const ElementRule rule(mesh);
  const Real scale = 1.0 / mesh.volume();
  const PointDensity density = g.point_density();

  CellSolution sol;
  sol.upper_bound_only = !g.convex;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(dofs.ndofs());
  sol.zero_corrector_value = cell_energy(mesh, dofs, rule, xi, zero, scale, density).energy;

  Eigen::VectorXd phi;
  if (g.quadratic && g.quad_at && !cfg.force_generic) {
    QuadraticProblem prob = assemble_quadratic(mesh, dofs, rule, xi, g.quad_at);
    phi = dofs.ndofs() ? solve_quadratic(prob) : Eigen::VectorXd();
    Eigen::VectorXd grad(dofs.ndofs());
    EnergyInfo info = cell_energy(mesh, dofs, rule, xi, phi, scale, density, &grad, true);
    sol.value = info.energy;
    sol.avg_stress = info.avg_stress;
    sol.grad_norm = grad.size() ? grad.norm() : 0.0;
    sol.iterations = 1;
    sol.converged = sol.grad_norm <= std::max(cfg.quad_tol, 1e-12 * (1.0 + std::abs(sol.value)));
  } else {
    auto fg = [&](const Eigen::VectorXd& p, Eigen::VectorXd& grad) {
      return cell_energy(mesh, dofs, rule, xi, p, scale, density, &grad).energy;
    };
    MinimizeOptions opt = cfg.minimize_options(dofs.ndofs());
    MinimizeResult best = lbfgs_minimize(fg, zero, opt);
    if (!g.convex && dofs.ndofs() > 0) {
      Rng rng = make_rng(cfg.seed);
      const Real amp = 0.5 * (1.0 + xi.norm()) * mesh.h[0];
      for (int r = 0; r < cfg.restarts; ++r) {
        Rng child = rng.spawn(std::uint64_t(r));
        Eigen::VectorXd start(dofs.ndofs());
        for (Eigen::Index i = 0; i < start.size(); ++i) start[i] = child.uniform(-amp, amp);
        MinimizeResult cand = lbfgs_minimize(fg, start, opt);
        if (cand.value < best.value) best = std::move(cand);
      }
    }
    phi = std::move(best.x);
    Eigen::VectorXd grad(dofs.ndofs());
    EnergyInfo info = cell_energy(mesh, dofs, rule, xi, phi, scale, density, &grad, true);
    sol.value = info.energy;
    sol.avg_stress = info.avg_stress;
    sol.grad_norm = best.grad_norm;
    sol.iterations = best.iterations;
    sol.converged = best.converged;
  }

  // Minimization never reports worse than the zero corrector; under roundoff
  // ties keep phi = 0.
  if (sol.value > sol.zero_corrector_value) {
    phi.setZero();
    Eigen::VectorXd grad(dofs.ndofs());
    EnergyInfo info = cell_energy(mesh, dofs, rule, xi, phi, scale, density, &grad, true);
    sol.value = info.energy;
    sol.avg_stress = info.avg_stress;
    sol.grad_norm = grad.size() ? grad.norm() : 0.0;
  }

  sol.corrector = CorrectorField(mesh, g.d);
  sol.corrector.values = dofs.to_nodes(phi);
  if (dofs.pinned_node >= 0) dofs.project_mean_zero(sol.corrector.values);
  return sol;
}

}  // namespace detail

/// Minimize the discrete cell energy
///   (1/T^N) sum_q w_q g(z_q; xi + grad phi(z_q))
/// over corrector fields with the grid's boundary closure. Quadratic
/// densities go through one assembled sparse Cholesky solve; everything
/// else through L-BFGS (plus seeded restarts when declared nonconvex).
inline CellSolution solve_cell(const CellDensity& g, const GradMat& xi, const CellGrid& grid,
                               const SolverConfig& cfg = {}) {
  grid.validate();
  contract(grid.N == g.N, "grid and density dimension mismatch");
  return detail::solve_on_mesh(g, xi, grid.mesh(), cfg);
}

struct TExtrapolation {
  std::vector<std::pair<int, CellSolution>> per_T;
  const CellSolution& final_solution() const { return per_T.back().second; }
  Real value() const { return per_T.back().second.value; }

  /// Dirichlet values along a divisor chain never increase beyond solver
  /// noise (a tiled T-corrector is admissible at every multiple of T).
  bool monotone_within(Real tol) const {
    for (std::size_t i = 1; i < per_T.size(); ++i)
      if (per_T[i].second.value > per_T[i - 1].second.value + tol) return false;
    return true;
  }
  std::vector<Real> successive_differences() const {
    std::vector<Real> diff;
    for (std::size_t i = 1; i < per_T.size(); ++i)
      diff.push_back(per_T[i].second.value - per_T[i - 1].second.value);
    return diff;
  }
};

/// Solve the same cell problem on a chain of growing periods (each T a
/// multiple of the previous). The last value is the density estimate; the
/// successive differences are the convergence diagnostic.
inline TExtrapolation t_extrapolate(const CellDensity& g, const GradMat& xi,
                                    const std::vector<int>& T_list, int n, BoundaryMode bc,
                                    const SolverConfig& cfg = {}) {
  contract(!T_list.empty(), "T_list must be nonempty");
  for (std::size_t i = 0; i < T_list.size(); ++i) {
    contract(T_list[i] >= 1, "T values must be positive");
    if (i) {
      contract(T_list[i] > T_list[i - 1], "T_list must be strictly increasing");
      contract(T_list[i] % T_list[i - 1] == 0, "each T must be a multiple of the previous");
    }
  }
  TExtrapolation out;
  for (int T : T_list) {
    CellGrid grid{g.N, T, n, bc};
    out.per_T.emplace_back(T, solve_cell(g, xi, grid, cfg));
  }
  return out;
}

/// Effective quadratic form A_hom from the corrector solves of a quadratic
/// density <A(z) vec(eta), vec(eta)> on the periodic cell.
struct EffectiveTensor {
  int N = 1;
  int d = 1;
  QuadForm form;  // (d*N) x (d*N), symmetric positive definite

  Real value(const GradMat& xi) const {
    const Eigen::Map<const Eigen::VectorXd> v(xi.data(), xi.size());
    return v.dot(form * v);
  }
  GradMat stress(const GradMat& xi) const {
    const Eigen::Map<const Eigen::VectorXd> v(xi.data(), xi.size());
    Eigen::VectorXd s = 2.0 * (form * v);
    return GradMat(Eigen::Map<GradMat>(s.data(), xi.rows(), xi.cols()));
  }
};

/// Solve the d*N periodic corrector problems (one per basis matrix E_k) and
/// assemble the averages <A(E_j + grad chi_j), (E_k + grad chi_k)>. The
/// symmetric form keeps A_hom exactly symmetric and within the classical
/// harmonic/arithmetic bounds.
inline EffectiveTensor quadratic_corrector_tensor(const std::function<QuadForm(const Point&)>& A,
                                                  const CellGrid& grid,
                                                  const SolverConfig& cfg = {}) {
  grid.validate();
  contract(grid.bc == BoundaryMode::periodic_mean_zero,
           "corrector tensor expects a periodic grid");
  (void)cfg;
  const int N = grid.N;
  // d is implied by the form size at any sample point.
  const TensorMesh mesh = grid.mesh();
  const ElementRule rule(mesh);
  Point z0 = mesh.node_position(mesh.elem_multi(0)) + rule.offset[0];
  const int nd = int(A(z0).rows());
  contract(nd % N == 0, "quadratic form size must be divisible by N");
  const int d = nd / N;
  const DofMap dofs(mesh, d);

  // One factorization, d*N right-hand sides.
  GradMat zero_xi = GradMat::Zero(d, N);
  QuadraticProblem base = assemble_quadratic(mesh, dofs, rule, zero_xi, A);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Real>> ldlt;
  ldlt.compute(base.K);
  if (ldlt.info() != Eigen::Success)
    throw SolverError("corrector tensor factorization failed (coefficient not SPD?)");

  std::vector<Eigen::VectorXd> chi(static_cast<std::size_t>(nd));
  for (int k = 0; k < nd; ++k) {
    GradMat Ek = GradMat::Zero(d, N);
    Ek(k % d, k / d) = 1.0;
    QuadraticProblem pk = assemble_quadratic(mesh, dofs, rule, Ek, A, /*check_spd=*/false);
    chi[std::size_t(k)] = dofs.ndofs() ? Eigen::VectorXd(ldlt.solve(pk.rhs)) : Eigen::VectorXd();
  }

  EffectiveTensor eff;
  eff.N = N;
  eff.d = d;
  eff.form = QuadForm::Zero(nd, nd);
  const Real scale = 1.0 / mesh.volume();
  const std::int64_t ne = mesh.elem_count();
  Eigen::MatrixXd H(nd, nd);  // column k: vec(E_k + grad chi_k) at the qpoint
  for (std::int64_t e = 0; e < ne; ++e) {
    const auto em = mesh.elem_multi(e);
    const Point corner0 = mesh.node_position(em);
    std::array<std::int64_t, 8> cdof{};
    for (int a = 0; a < rule.ncorner; ++a)
      cdof[std::size_t(a)] = dofs.node_dof[std::size_t(mesh.node_index(mesh.elem_node(em, a)))];
    for (int q = 0; q < rule.nq; ++q) {
      const Point zq = corner0 + rule.offset[q];
      H.setZero();
      for (int k = 0; k < nd; ++k) {
        H(k, k) = 1.0;  // vec(E_k)
        if (!chi[std::size_t(k)].size()) continue;
        for (int a = 0; a < rule.ncorner; ++a) {
          const std::int64_t dof = cdof[std::size_t(a)];
          if (dof < 0) continue;
          for (int c = 0; c < d; ++c) {
            const Real val = chi[std::size_t(k)][dof * d + c];
            for (int m = 0; m < N; ++m) H(m * d + c, k) += val * rule.dshape[q][a][m];
          }
        }
      }
      const QuadForm Aq = A(zq);
      eff.form.noalias() += (rule.weight[q] * scale) * (H.transpose() * Aq * H);
    }
  }
  eff.form = 0.5 * (eff.form + eff.form.transpose());
  return eff;
}

}  // namespace homoglab
