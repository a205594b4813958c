#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace homoglab;
using namespace homoglab::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

CellDensity frozen(const MultiscaleIntegrand& f) {
  return freeze_inner(f, Point::Zero(f.N), Point::Zero(f.N));
}

}  // namespace

TEST_CASE("constant density: zero corrector, value |xi|^2") {
  for (int N : {1, 2, 3}) {
    auto f = make_quadratic_integrand(N, N, CoefficientField{});
    GradMat xi = GradMat::Identity(N, N) * 1.5;
    for (BoundaryMode bc : {BoundaryMode::dirichlet_zero, BoundaryMode::periodic_mean_zero}) {
      CellGrid grid{N, 1, N == 3 ? 4 : 8, bc};
      CellSolution sol = solve_cell(frozen(f), xi, grid);
      INFO("N=" << N << " bc=" << to_string(bc));
      CHECK_THAT(sol.value, WithinRel(xi.squaredNorm(), 1e-12));
      CHECK(sol.corrector.sup_norm() <= 1e-10);
      CHECK(sol.converged);
    }
  }
}

TEST_CASE("1D laminate periodic cell hits the harmonic mean") {
  auto f = laminate_1_4();
  CellGrid grid{1, 1, 256, BoundaryMode::periodic_mean_zero};
  CellSolution sol = solve_cell(frozen(f), scalar_xi(1.0), grid);
  CHECK_THAT(sol.value, WithinAbs(1.6, 1e-3));
  CHECK_THAT(sol.value, WithinAbs(laminate_oracle({{0.5, 1.0}, {0.5, 4.0}}, LaminateMode::harmonic),
                                  1e-10));
  // avg stress is the effective coefficient times 2 xi
  CHECK_THAT(sol.avg_stress(0, 0), WithinAbs(3.2, 1e-9));
}

TEST_CASE("1D laminate through the general (L-BFGS) path") {
  auto f = laminate_1_4();
  SolverConfig cfg;
  cfg.force_generic = true;
  cfg.grad_tol_rel = 1e-10;
  CellGrid grid{1, 1, 64, BoundaryMode::periodic_mean_zero};
  CellSolution sol = solve_cell(frozen(f), scalar_xi(1.0), grid, cfg);
  CHECK(sol.converged);
  CHECK_THAT(sol.value, WithinAbs(1.6, 1e-7));
}

TEST_CASE("1D p = 3 laminate matches the p-harmonic closed form") {
  auto f = make_pnorm_integrand(1, 1, 3.0, coeff({laminate_factor(CoeffVar::Z, 0, {1.0, 4.0})}));
  SolverConfig cfg;
  cfg.grad_tol_rel = 1e-11;
  CellGrid grid{1, 1, 128, BoundaryMode::periodic_mean_zero};
  CellSolution sol = solve_cell(frozen(f), scalar_xi(1.0), grid, cfg);
  const Real oracle =
      laminate_oracle({{0.5, 1.0}, {0.5, 4.0}}, LaminateMode::p_harmonic, {}, 3.0);
  CHECK(sol.converged);
  CHECK_THAT(sol.value, WithinRel(oracle, 1e-7));
}

TEST_CASE("2D checkerboard approaches the duality value 2") {
  auto f = make_quadratic_integrand(2, 1, coeff({checkerboard_factor(CoeffVar::Z, 1.0, 4.0)}));
  CellGrid grid{2, 1, 64, BoundaryMode::periodic_mean_zero};
  CellSolution sol = solve_cell(frozen(f), basis_xi(1, 2, 0, 0), grid);
  CHECK_THAT(sol.value, WithinRel(2.0, 0.05));
  // Mesh refinement decreases the value toward 2 (nested spaces).
  CellGrid coarse{2, 1, 32, BoundaryMode::periodic_mean_zero};
  CellSolution sc = solve_cell(frozen(f), basis_xi(1, 2, 0, 0), coarse);
  CHECK(sol.value <= sc.value + 1e-12);
  CHECK(std::abs(sol.value - 2.0) < std::abs(sc.value - 2.0));
}

TEST_CASE("t_extrapolate") {
  SECTION("constant density: identical values for every T") {
    auto f = make_quadratic_integrand(1, 1, CoefficientField{});
    auto ext = t_extrapolate(frozen(f), scalar_xi(2.0), {1, 2, 4}, 16,
                             BoundaryMode::dirichlet_zero);
    for (const auto& [T, sol] : ext.per_T) CHECK_THAT(sol.value, WithinRel(4.0, 1e-12));
  }
  SECTION("1D laminate: Dirichlet values equal the harmonic mean for every T") {
    auto f = laminate_1_4();
    auto ext = t_extrapolate(frozen(f), scalar_xi(1.0), {1, 2, 4}, 64,
                             BoundaryMode::dirichlet_zero);
    for (const auto& [T, sol] : ext.per_T) CHECK_THAT(sol.value, WithinAbs(1.6, 1e-9));
    CHECK(ext.monotone_within(1e-9));
  }
  SECTION("T_list preconditions") {
    auto f = laminate_1_4();
    CHECK_THROWS_AS(t_extrapolate(frozen(f), scalar_xi(1.0), {}, 8, BoundaryMode::dirichlet_zero),
                    ContractViolation);
    CHECK_THROWS_AS(
        t_extrapolate(frozen(f), scalar_xi(1.0), {2, 3}, 8, BoundaryMode::dirichlet_zero),
        ContractViolation);
    CHECK_THROWS_AS(
        t_extrapolate(frozen(f), scalar_xi(1.0), {4, 2}, 8, BoundaryMode::dirichlet_zero),
        ContractViolation);
  }
}

TEST_CASE("convex 2D: Dirichlet T=8 sits within 3% of periodic T=1") {
  auto f = make_quadratic_integrand(2, 1, coeff({trig_factor(CoeffVar::Z, 2.0, 0.75, {1, 1})}));
  CellGrid per{2, 1, 16, BoundaryMode::periodic_mean_zero};
  CellSolution ps = solve_cell(frozen(f), basis_xi(1, 2, 0, 0), per);
  CellGrid dir{2, 8, 16, BoundaryMode::dirichlet_zero};
  CellSolution ds = solve_cell(frozen(f), basis_xi(1, 2, 0, 0), dir);
  CHECK(std::abs(ds.value - ps.value) / std::abs(ps.value) <= 0.03);
  CHECK(ds.value >= ps.value - 1e-10);  // Dirichlet approaches from above
}

TEST_CASE("quadratic corrector tensor") {
  SECTION("constant coefficient reproduces itself") {
    Rng rng = make_rng(2);
    const QuadForm A = random_spd(4, rng);
    auto quad_at = [&A](const Point&) { return A; };
    EffectiveTensor t = quadratic_corrector_tensor(quad_at, CellGrid{2, 1, 8, BoundaryMode::periodic_mean_zero});
    CHECK((t.form - A).norm() < 1e-10 * A.norm());
  }
  SECTION("2D scalar layered in z1: diag(harmonic, arithmetic)") {
    auto f = laminate_1_4(2, 1);
    CellDensity g = frozen(f);
    EffectiveTensor t =
        quadratic_corrector_tensor(g.quad_at, CellGrid{2, 1, 32, BoundaryMode::periodic_mean_zero});
    CHECK_THAT(t.form(0, 0), WithinAbs(1.6, 1e-9));
    CHECK_THAT(t.form(1, 1), WithinAbs(2.5, 1e-9));
    CHECK_THAT(t.form(0, 1), WithinAbs(0.0, 1e-10));
  }
  SECTION("checkerboard: 2.0 * Id within 5%") {
    auto f = make_quadratic_integrand(2, 1, coeff({checkerboard_factor(CoeffVar::Z, 1.0, 4.0)}));
    CellDensity g = frozen(f);
    EffectiveTensor t =
        quadratic_corrector_tensor(g.quad_at, CellGrid{2, 1, 64, BoundaryMode::periodic_mean_zero});
    CHECK_THAT(t.form(0, 0), WithinRel(2.0, 0.05));
    CHECK_THAT(t.form(1, 1), WithinRel(2.0, 0.05));
    CHECK_THAT(t.form(0, 0), WithinRel(t.form(1, 1), 1e-10));  // symmetry of the pattern
  }
  SECTION("non-SPD coefficient is rejected") {
    auto quad_at = [](const Point& z) {
      QuadForm A = QuadForm::Identity(2, 2);
      if (z[0] > 0.5) A(0, 0) = -1.0;
      return A;
    };
    CHECK_THROWS_AS(
        quadratic_corrector_tensor(quad_at, CellGrid{2, 1, 4, BoundaryMode::periodic_mean_zero}),
        ContractViolation);
  }
}

TEST_CASE("upper-bound property: solving never exceeds the zero corrector") {
  Rng rng = make_rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    const int N = 1 + int(rng.integer(0, 1));
    auto f = make_quadratic_integrand(
        N, 1, coeff({trig_factor(CoeffVar::Z, 2.0, rng.uniform(0.1, 0.9), {1, 1})}));
    GradMat xi(1, N);
    for (int j = 0; j < N; ++j) xi(0, j) = rng.uniform(-2.0, 2.0);
    CellGrid grid{N, 1, 16, BoundaryMode::periodic_mean_zero};
    CellSolution sol = solve_cell(frozen(f), xi, grid);
    REQUIRE(sol.value <= sol.zero_corrector_value + 1e-12 * (1.0 + std::abs(sol.value)));
  }
}

TEST_CASE("translation invariance: integer coefficient shifts leave the value bit-identical") {
  auto f = laminate_1_4(2, 1);
  for (auto shift : {std::array<Real, 2>{1.0, 0.0}, std::array<Real, 2>{2.0, -3.0}}) {
    CellDensity g = frozen(f);
    CellDensity gs = g;
    const MultiscaleIntegrand* fp = &f;
    const Point x0 = Point::Zero(2), y0 = Point::Zero(2);
    gs.value = [fp, x0, y0, shift](const Point& z, const GradMat& eta) {
      Point zz = z;
      zz[0] += shift[0];
      zz[1] += shift[1];
      return fp->eval(x0, y0, zz, eta);
    };
    gs.value_stress = [fp, x0, y0, shift](const Point& z, const GradMat& eta) {
      Point zz = z;
      zz[0] += shift[0];
      zz[1] += shift[1];
      return std::make_pair(fp->eval(x0, y0, zz, eta), fp->stress(x0, y0, zz, eta));
    };
    gs.quad_at = [fp, x0, y0, shift](const Point& z) {
      Point zz = z;
      zz[0] += shift[0];
      zz[1] += shift[1];
      return fp->quad_form(x0, y0, zz);
    };
    CellGrid grid{2, 1, 16, BoundaryMode::periodic_mean_zero};
    const GradMat xi = basis_xi(1, 2, 0, 0);
    CellSolution a = solve_cell(g, xi, grid);
    CellSolution b = solve_cell(gs, xi, grid);
    REQUIRE(a.value == b.value);
  }
}

TEST_CASE("convexity transfer: xi -> value is midpoint convex for convex densities") {
  auto f = make_pnorm_integrand(1, 1, 3.0, coeff({laminate_factor(CoeffVar::Z, 0, {1.0, 3.0})}));
  SolverConfig cfg;
  cfg.grad_tol_rel = 1e-10;
  CellGrid grid{1, 1, 32, BoundaryMode::periodic_mean_zero};
  auto value_at = [&](Real s) { return solve_cell(frozen(f), scalar_xi(s), grid, cfg).value; };
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Real a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    const Real va = value_at(a), vb = value_at(b), vm = value_at(0.5 * (a + b));
    const Real tol = 2.0 * cfg.grad_tol_rel * (1.0 + std::abs(va) + std::abs(vb));
    REQUIRE(vm <= 0.5 * (va + vb) + tol);
  }
}

TEST_CASE("avg_stress is the xi-derivative of the cell value") {
  SECTION("quadratic: exact to solver tolerance") {
    auto f = laminate_1_4(2, 1);
    CellGrid grid{2, 1, 16, BoundaryMode::periodic_mean_zero};
    GradMat xi(1, 2);
    xi << 1.0, 0.5;
    const Real h = 1e-3;
    CellSolution s0 = solve_cell(frozen(f), xi, grid);
    for (int j = 0; j < 2; ++j) {
      GradMat xp = xi, xm = xi;
      xp(0, j) += h;
      xm(0, j) -= h;
      const Real fd = (solve_cell(frozen(f), xp, grid).value -
                       solve_cell(frozen(f), xm, grid).value) / (2.0 * h);
      REQUIRE_THAT(s0.avg_stress(0, j), WithinAbs(fd, 1e-8 * (1.0 + std::abs(fd))));
    }
  }
  SECTION("general convex: relative error below 1e-3") {
    auto f = make_pnorm_integrand(1, 1, 3.0, coeff({laminate_factor(CoeffVar::Z, 0, {1.0, 2.0})}));
    SolverConfig cfg;
    cfg.grad_tol_rel = 1e-11;
    CellGrid grid{1, 1, 32, BoundaryMode::periodic_mean_zero};
    const Real h = 1e-4;
    CellSolution s0 = solve_cell(frozen(f), scalar_xi(1.3), grid, cfg);
    const Real fd = (solve_cell(frozen(f), scalar_xi(1.3 + h), grid, cfg).value -
                     solve_cell(frozen(f), scalar_xi(1.3 - h), grid, cfg).value) / (2.0 * h);
    REQUIRE(std::abs(s0.avg_stress(0, 0) - fd) / std::abs(fd) < 1e-3);
  }
}

TEST_CASE("growth bounds hold for every solved cell") {
  Rng rng = make_rng(31);
  auto dwell = make_double_well_integrand(2, 2);
  auto lam = laminate_1_4(2, 1);
  for (int trial = 0; trial < 5; ++trial) {
    GradMat xi1(2, 2), xi2(1, 2);
    for (int i = 0; i < 4; ++i) xi1.data()[i] = rng.uniform(-2.0, 2.0);
    for (int i = 0; i < 2; ++i) xi2.data()[i] = rng.uniform(-2.0, 2.0);
    SolverConfig cfg;
    cfg.seed = 100 + std::uint64_t(trial);
    CellGrid small{2, 1, 4, BoundaryMode::dirichlet_zero};
    CellSolution sw = solve_cell(frozen(dwell), xi1, small, cfg);
    CHECK(sw.value >= dwell.growth.lower(xi1) - 1e-12);
    CHECK(sw.value <= dwell.growth.upper(xi1) + 1e-12);
    CHECK(sw.upper_bound_only);
    CellGrid pg{2, 1, 16, BoundaryMode::periodic_mean_zero};
    CellSolution sl = solve_cell(frozen(lam), xi2, pg);
    CHECK(sl.value >= lam.growth.lower(xi2) - 1e-12);
    CHECK(sl.value <= lam.growth.upper(xi2) + 1e-12);
  }
}

TEST_CASE("mesh refinement forms a Cauchy sequence") {
  auto f = make_quadratic_integrand(2, 1, coeff({checkerboard_factor(CoeffVar::Z, 1.0, 4.0)}));
  std::vector<Real> values;
  for (int n : {8, 16, 32, 64})
    values.push_back(
        solve_cell(frozen(f), basis_xi(1, 2, 0, 0), CellGrid{2, 1, n, BoundaryMode::periodic_mean_zero})
            .value);
  for (std::size_t i = 2; i < values.size(); ++i)
    CHECK(std::abs(values[i] - values[i - 1]) < std::abs(values[i - 1] - values[i - 2]));
}

TEST_CASE("nonconvex multistart never loses to the zero start") {
  auto dwell = make_double_well_integrand(1, 1);
  SolverConfig cfg;
  cfg.restarts = 8;
  cfg.seed = 5;
  CellGrid grid{1, 1, 32, BoundaryMode::dirichlet_zero};
  // xi in the well: relaxation can do strictly better than the zero corrector
  CellSolution sol = solve_cell(frozen(dwell), scalar_xi(0.5), grid, cfg);
  CHECK(sol.value <= sol.zero_corrector_value + 1e-14);
  CHECK(sol.upper_bound_only);
}
