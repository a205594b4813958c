#pragma once

#include <homoglab/cell.hpp>

#include <cstring>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

namespace homoglab {

/// Numerics for a nested two-level density evaluation.
struct ReiterateConfig {
  int inner_n = 32;
  int inner_T = 1;
  BoundaryMode inner_bc = BoundaryMode::periodic_mean_zero;
  int outer_n = 32;
  std::vector<int> outer_T_list;  // empty -> {1} periodic convex, {1,2,4} Dirichlet otherwise
  BoundaryMode outer_bc = BoundaryMode::periodic_mean_zero;
  bool outer_bc_set = false;

  SolverConfig inner_solver;
  SolverConfig outer_solver;

  /// Inner evaluations are solved on a xi-lattice of step
  /// xi_quant_step * (1 + |xi|) and corrected to first order in between;
  /// 0 means exact memoization on the bit pattern.
  Real xi_quant_step = 1e-3;
  Real y_quant_step = 1e-9;
  bool taylor_correction = true;
  bool fast_quadratic = true;  // quadratic integrands: corrector-tensor route
  std::int64_t max_inner_solves = 2000000;

  std::vector<int> resolved_outer_T_list(bool convex) const {
    if (!outer_T_list.empty()) return outer_T_list;
    if (resolved_outer_bc(convex) == BoundaryMode::periodic_mean_zero) return {1};
    return {1, 2, 4};
  }
  BoundaryMode resolved_outer_bc(bool convex) const {
    if (outer_bc_set) return outer_bc;
    return convex ? BoundaryMode::periodic_mean_zero : BoundaryMode::dirichlet_zero;
  }
};

struct DensityEstimate {
  Real value = 0.0;
  GradMat avg_stress;
  std::vector<std::pair<int, Real>> per_T;
  std::int64_t inner_solve_count = 0;
  std::int64_t cache_hits = 0;
  bool upper_bound_only = false;
  bool converged = true;
  bool monotone_ok = true;      // Dirichlet divisor chains only
  Real growth_lower_margin = 0.0;
  Real growth_upper_margin = 0.0;
};

namespace detail {

struct NestedStats {
  std::int64_t solves = 0;
  std::int64_t hits = 0;
  bool unconverged = false;
  std::int64_t budget = 0;
};

struct BudgetExhausted {};

inline std::int64_t quant_key(Real v, Real step) {
  if (step <= 0.0) {
    std::int64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
  }
  return std::llround(v / step);
}

inline Real dequant(std::int64_t key, Real step, Real fallback) {
  if (step <= 0.0) return fallback;
  return Real(key) * step;
}

struct InnerKey {
  std::array<std::int64_t, 3> y{0, 0, 0};
  std::array<std::int64_t, 9> xi{0, 0, 0, 0, 0, 0, 0, 0, 0};
  bool operator<(const InnerKey& o) const {
    if (y != o.y) return y < o.y;
    return xi < o.xi;
  }
};

struct InnerEntry {
  Real value = 0.0;
  GradMat stress;
  GradMat eta_q;  // lattice point the inner problem was solved at
};

}  // namespace detail

/// Memoized store of inner cell solves keyed by the quantized (wrapped y,
/// xi) pair. Insertion is first-writer-wins; entries are a pure function of
/// the key, so contents do not depend on arrival order.
class InnerDensityCache {
 public:
  std::optional<detail::InnerEntry> lookup(const detail::InnerKey& k) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = map_.find(k);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  const detail::InnerEntry& insert(const detail::InnerKey& k, detail::InnerEntry e) {
    std::lock_guard<std::mutex> lock(mutex_);
    return map_.emplace(k, std::move(e)).first->second;
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return map_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<detail::InnerKey, detail::InnerEntry> map_;
};

/// Inner homogenized density at frozen (x, y): one cell solve in z.
/// Quadratic integrands take the corrector-tensor route, which is exact in
/// xi; everything else solves the cell problem at the given xi.
inline std::pair<Real, GradMat> inner_density(const MultiscaleIntegrand& f, const Point& x,
                                              const Point& y, const GradMat& xi,
                                              const ReiterateConfig& cfg = {}) {
  contract(xi.rows() == f.d && xi.cols() == f.N, "xi must be d x N");
  if (!f.depends_on_z) {
    // No fast oscillation: the corrector is zero and the density is f itself.
    Point z = Point::Zero(f.N);
    if (f.convex) return {f.eval(x, y, z, xi), f.stress(x, y, z, xi)};
  }
  if (f.quadratic && cfg.fast_quadratic) {
    CellDensity g = freeze_inner(f, x, y);
    CellGrid grid{f.N, 1, cfg.inner_n, BoundaryMode::periodic_mean_zero};
    EffectiveTensor t = quadratic_corrector_tensor(g.quad_at, grid, cfg.inner_solver);
    return {t.value(xi), t.stress(xi)};
  }
  CellDensity g = freeze_inner(f, x, y);
  CellGrid grid{f.N, cfg.inner_T, cfg.inner_n, cfg.inner_bc};
  CellSolution s = solve_cell(g, xi, grid, cfg.inner_solver);
  return {s.value, s.avg_stress};
}

namespace detail {

/// Outer-level density built from cached inner solves. Inner problems are
/// solved at xi-lattice points; between lattice points the stored value and
/// stress give a first-order (envelope-consistent) model.
class NestedOuterDensity {
 public:
  NestedOuterDensity(const MultiscaleIntegrand& f, Point x, const ReiterateConfig& cfg,
                     Real xi_scale, std::shared_ptr<InnerDensityCache> cache,
                     std::shared_ptr<NestedStats> stats)
      : f_(&f), x_(std::move(x)), cfg_(cfg), cache_(std::move(cache)), stats_(std::move(stats)) {
    xi_step_abs_ = cfg_.xi_quant_step > 0.0 ? cfg_.xi_quant_step * (1.0 + xi_scale) : 0.0;
    if (f_->quadratic && cfg_.fast_quadratic) {
      tensor_cache_ = std::make_shared<std::map<std::array<std::int64_t, 3>, EffectiveTensor>>();
    }
  }

  CellDensity as_cell_density() const {
    CellDensity g;
    g.N = f_->N;
    g.d = f_->d;
    g.convex = f_->convex;
    g.growth = f_->growth;
    if (tensor_cache_) {
      g.quadratic = true;
      g.quad_at = [this](const Point& y) { return tensor_at(y).form; };
      g.value = [this](const Point& y, const GradMat& eta) { return tensor_at(y).value(eta); };
      g.value_stress = [this](const Point& y, const GradMat& eta) {
        const EffectiveTensor& t = tensor_at(y);
        return std::make_pair(t.value(eta), t.stress(eta));
      };
    } else {
      g.quadratic = false;
      g.value = [this](const Point& y, const GradMat& eta) { return eval(y, eta).first; };
      g.value_stress = [this](const Point& y, const GradMat& eta) { return eval(y, eta); };
    }
    return g;
  }

 private:
  const EffectiveTensor& tensor_at(const Point& y) const {
    const Point yw = wrap_unit(y);
    std::array<std::int64_t, 3> key{0, 0, 0};
    for (int i = 0; i < f_->N; ++i) key[std::size_t(i)] = quant_key(yw[i], cfg_.y_quant_step);
    auto it = tensor_cache_->find(key);
    if (it != tensor_cache_->end()) {
      ++stats_->hits;
      return it->second;
    }
    if (stats_->budget > 0 && stats_->solves >= stats_->budget) throw BudgetExhausted{};
    ++stats_->solves;
    CellDensity g = freeze_inner(*f_, x_, yw);
    CellGrid grid{f_->N, 1, cfg_.inner_n, BoundaryMode::periodic_mean_zero};
    EffectiveTensor t = quadratic_corrector_tensor(g.quad_at, grid, cfg_.inner_solver);
    return tensor_cache_->emplace(key, std::move(t)).first->second;
  }

  std::pair<Real, GradMat> eval(const Point& y, const GradMat& eta) const {
    const Point yw = wrap_unit(y);
    InnerKey key;
    for (int i = 0; i < f_->N; ++i) key.y[std::size_t(i)] = quant_key(yw[i], cfg_.y_quant_step);
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      key.xi[std::size_t(i)] = quant_key(eta.data()[i], xi_step_abs_);

    std::optional<InnerEntry> hit = cache_->lookup(key);
    if (!hit) {
      if (stats_->budget > 0 && stats_->solves >= stats_->budget) throw BudgetExhausted{};
      ++stats_->solves;
      // Solve at the de-quantized lattice point so the stored entry is a
      // pure function of the key.
      GradMat eta_q(eta.rows(), eta.cols());
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        eta_q.data()[i] = dequant(key.xi[std::size_t(i)], xi_step_abs_, eta.data()[i]);
      CellDensity g = freeze_inner(*f_, x_, yw);
      CellGrid grid{f_->N, cfg_.inner_T, cfg_.inner_n, cfg_.inner_bc};
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

  const MultiscaleIntegrand* f_;
  Point x_;
  ReiterateConfig cfg_;
  Real xi_step_abs_ = 0.0;
  std::shared_ptr<InnerDensityCache> cache_;
  std::shared_ptr<NestedStats> stats_;
  std::shared_ptr<std::map<std::array<std::int64_t, 3>, EffectiveTensor>> tensor_cache_;
};

inline void attach_growth_margins(DensityEstimate& est, const GrowthSpec& growth,
                                  const GradMat& xi) {
  est.growth_lower_margin = est.value - growth.lower(xi);
  est.growth_upper_margin = growth.upper(xi) - est.value;
  const Real slack = 1e-9 * (1.0 + std::abs(est.value));
  if (est.growth_lower_margin < -slack || est.growth_upper_margin < -slack)
    throw ContractViolation("computed effective density violates its growth envelope");
}

}  // namespace detail

/// Two-level effective density at frozen x: homogenize in z at every outer
/// quadrature point (through the cache), then solve the outer cell problem
/// in y with the inner average stress as the integrand derivative.
inline DensityEstimate outer_density(const MultiscaleIntegrand& f, const Point& x,
                                     const GradMat& xi, const ReiterateConfig& cfg = {}) {
  contract(xi.rows() == f.d && xi.cols() == f.N, "xi must be d x N");
  auto cache = std::make_shared<InnerDensityCache>();
  auto stats = std::make_shared<detail::NestedStats>();
  stats->budget = cfg.max_inner_solves;

  detail::NestedOuterDensity nested(f, x, cfg, xi.norm(), cache, stats);
  CellDensity outer_g = nested.as_cell_density();

  SolverConfig outer_solver = cfg.outer_solver;
  if (!outer_g.quadratic && cfg.xi_quant_step > 0.0) {
    // The quantized surrogate is piecewise linear in the corrector, so the
    // gradient never reaches a smooth-problem tolerance. Stop instead once
    // progress falls below the quantization noise floor.
    if (outer_solver.stall_tol <= 0.0) outer_solver.stall_tol = 100.0 * cfg.xi_quant_step;
    if (outer_solver.progress_tol <= 0.0)
      outer_solver.progress_tol = 10.0 * cfg.xi_quant_step * cfg.xi_quant_step;
  }

  const BoundaryMode bc = cfg.resolved_outer_bc(f.convex);
  const std::vector<int> T_list = cfg.resolved_outer_T_list(f.convex);

  DensityEstimate est;
  est.upper_bound_only = !f.convex;
  est.value = std::numeric_limits<Real>::quiet_NaN();
  for (int T : T_list) {
    try {
      CellGrid grid{f.N, T, cfg.outer_n, bc};
      CellSolution sol = solve_cell(outer_g, xi, grid, outer_solver);
      est.per_T.emplace_back(T, sol.value);
      est.value = sol.value;
      est.avg_stress = sol.avg_stress;
      if (!sol.converged) est.converged = false;
    } catch (const detail::BudgetExhausted&) {
      // Partial results stay; the estimate is flagged unconverged.
      est.converged = false;
      break;
    }
  }
  if (bc == BoundaryMode::dirichlet_zero && est.per_T.size() > 1) {
    const Real tol = 2.0 * std::max(outer_solver.grad_tol_rel * (1.0 + std::abs(est.value)),
                                    outer_solver.quad_tol);
    for (std::size_t i = 1; i < est.per_T.size(); ++i)
      if (est.per_T[i].second > est.per_T[i - 1].second + tol) est.monotone_ok = false;
  }
  est.inner_solve_count = stats->solves;
  est.cache_hits = stats->hits;
  if (stats->unconverged) est.converged = false;
  if (std::isfinite(est.value)) detail::attach_growth_margins(est, f.growth, xi);
  return est;
}

/// Rows of a tabulated effective-density sweep.
struct SweepRow {
  GradMat xi;
  std::optional<DensityEstimate> estimate;
  std::string error;  // non-empty when this row failed
};

/// Independent outer_density evaluations in input order; failures are
/// recorded per row and do not stop the sweep.
inline std::vector<SweepRow> density_sweep(const MultiscaleIntegrand& f, const Point& x,
                                           const std::vector<GradMat>& xi_list,
                                           const ReiterateConfig& cfg = {}, int threads = 1) {
  contract(!xi_list.empty(), "xi_list must be nonempty");
  std::vector<SweepRow> rows(xi_list.size());
  parallel_for_indexed(xi_list.size(), threads, [&](std::size_t i) {
    rows[i].xi = xi_list[i];
    try {
      rows[i].estimate = outer_density(f, x, xi_list[i], cfg);
    } catch (const std::exception& e) {
      rows[i].error = e.what();
    }
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Analytic laminate oracles
// ---------------------------------------------------------------------------

enum class LaminateMode { harmonic, arithmetic, iterated, p_harmonic };

inline LaminateMode laminate_mode_from_string(const std::string& s) {
  if (s == "harmonic") return LaminateMode::harmonic;
  if (s == "arithmetic") return LaminateMode::arithmetic;
  if (s == "iterated") return LaminateMode::iterated;
  if (s == "p_harmonic") return LaminateMode::p_harmonic;
  throw ContractViolation("unknown laminate oracle mode '" + s + "'");
}

using LaminatePhases = std::vector<std::pair<Real, Real>>;  // (volume fraction, coefficient)

namespace detail {

inline void check_phases(const LaminatePhases& phases) {
  contract(!phases.empty(), "laminate oracle needs at least one phase");
  Real sum = 0.0;
  for (const auto& [t, a] : phases) {
    contract(t > 0.0, "laminate volume fractions must be positive");
    contract(a > 0.0, "laminate coefficients must be positive");
    sum += t;
  }
  contract(std::abs(sum - 1.0) <= 1e-12, "laminate volume fractions must sum to 1");
}

inline Real harmonic_mean(const LaminatePhases& phases) {
  Real acc = 0.0;
  for (const auto& [t, a] : phases) acc += t / a;
  return 1.0 / acc;
}

inline Real arithmetic_mean(const LaminatePhases& phases) {
  Real acc = 0.0;
  for (const auto& [t, a] : phases) acc += t * a;
  return acc;
}

inline Real p_harmonic_mean(const LaminatePhases& phases, Real p) {
  contract(p > 1.0, "p_harmonic mean needs p > 1");
  Real acc = 0.0;
  for (const auto& [t, a] : phases) acc += t * std::pow(a, -1.0 / (p - 1.0));
  return std::pow(acc, -(p - 1.0));
}

}  // namespace detail

/// Closed-form 1D effective coefficients. `iterated` composes two separated
/// scales of a separable product coefficient: harm(outer) * harm(inner).
inline Real laminate_oracle(const LaminatePhases& phases, LaminateMode mode,
                            const LaminatePhases& inner_phases = {}, Real p = 2.0) {
  detail::check_phases(phases);
  switch (mode) {
    case LaminateMode::harmonic: return detail::harmonic_mean(phases);
    case LaminateMode::arithmetic: return detail::arithmetic_mean(phases);
    case LaminateMode::p_harmonic: return detail::p_harmonic_mean(phases, p);
    case LaminateMode::iterated: {
      detail::check_phases(inner_phases);
      return detail::harmonic_mean(phases) * detail::harmonic_mean(inner_phases);
    }
  }
  throw ContractViolation("unhandled laminate mode");
}

}  // namespace homoglab
