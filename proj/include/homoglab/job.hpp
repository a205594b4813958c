#pragma once

#include <homoglab/direct.hpp>
#include <homoglab/table.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace homoglab {

/// Exit codes shared by the job runner and the CLI.
enum ExitCode : int {
  exit_ok = 0,
  exit_contract = 2,   // bad config / violated precondition
  exit_solver = 3,     // solver non-convergence (partial outputs written)
  exit_io = 4,         // output write failure
};

namespace jobdetail {

inline Point parse_point(const json& j, int n, const std::string& where) {
  contract(j.is_array() && int(j.size()) == n,
           where + " must be an array of " + std::to_string(n) + " numbers");
  Point p(n);
  for (int i = 0; i < n; ++i) p[i] = j[std::size_t(i)].get<Real>();
  return p;
}

inline GradMat parse_matrix(const json& j, int rows, int cols, const std::string& where) {
  contract(j.is_array() && int(j.size()) == rows, where + " must have " + std::to_string(rows) + " rows");
  GradMat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    contract(j[std::size_t(r)].is_array() && int(j[std::size_t(r)].size()) == cols,
             where + " rows must have " + std::to_string(cols) + " entries");
    for (int c = 0; c < cols; ++c) m(r, c) = j[std::size_t(r)][std::size_t(c)].get<Real>();
  }
  return m;
}

}  // namespace jobdetail

/// Parsed numerics block (one schema across commands; unknown keys rejected).
struct NumericsConfig {
  int n = 32;
  int T = 1;
  BoundaryMode bc = BoundaryMode::periodic_mean_zero;
  std::vector<int> T_list;

  int inner_n = 32;
  int inner_T = 1;
  BoundaryMode inner_bc = BoundaryMode::periodic_mean_zero;
  int outer_n = 32;
  std::optional<BoundaryMode> outer_bc;
  std::vector<int> outer_T_list;

  int membrane_n = 4;
  int membrane_n3 = 0;
  int film_inner_n = 4;
  std::optional<BoundaryMode> film_inner_bc;
  std::vector<int> film_T_list = {1, 2, 4};

  Real quad_tol = 1e-10;
  Real grad_tol_rel = 1e-7;
  Real grad_tol_abs = 1e-12;
  std::int64_t max_iter_factor = 10;
  int restarts = 8;

  Real xi_quant_step = 1e-3;
  Real y_quant_step = 1e-9;
  bool taylor_correction = true;
  bool fast_quadratic = true;
  bool force_generic = false;
  bool force_inner_solves = false;
  std::int64_t max_inner_solves = 2000000;

  std::vector<Real> eps_list;
  int points_per_fine_period = 8;
  Real rel_tol = 0.02;
  int samples = 200;
  int x_elements = 16;

  std::uint64_t seed = 1;

  static NumericsConfig parse(const json& j, std::uint64_t seed) {
    NumericsConfig c;
    c.seed = seed;
    if (j.is_null()) return c;
    detail::check_known_keys(
        j,
        {"n", "T", "bc", "T_list", "inner_n", "inner_T", "inner_bc", "outer_n", "outer_bc",
         "outer_T_list", "membrane_n", "membrane_n3", "film_inner_n", "film_inner_bc",
         "film_T_list", "quad_tol", "grad_tol_rel", "grad_tol_abs", "max_iter_factor", "restarts",
         "xi_quant_step", "y_quant_step", "taylor_correction", "fast_quadratic", "force_generic",
         "force_inner_solves", "max_inner_solves", "eps_list", "points_per_fine_period", "rel_tol",
         "samples", "x_elements"},
        "numerics");
    c.n = j.value("n", c.n);
    c.T = j.value("T", c.T);
    if (j.contains("bc")) c.bc = boundary_mode_from_string(j.at("bc").get<std::string>());
    c.T_list = j.value("T_list", c.T_list);
    c.inner_n = j.value("inner_n", c.inner_n);
    c.inner_T = j.value("inner_T", c.inner_T);
    if (j.contains("inner_bc"))
      c.inner_bc = boundary_mode_from_string(j.at("inner_bc").get<std::string>());
    c.outer_n = j.value("outer_n", c.outer_n);
    if (j.contains("outer_bc"))
      c.outer_bc = boundary_mode_from_string(j.at("outer_bc").get<std::string>());
    c.outer_T_list = j.value("outer_T_list", c.outer_T_list);
    c.membrane_n = j.value("membrane_n", c.membrane_n);
    c.membrane_n3 = j.value("membrane_n3", c.membrane_n3);
    c.film_inner_n = j.value("film_inner_n", c.film_inner_n);
    if (j.contains("film_inner_bc"))
      c.film_inner_bc = boundary_mode_from_string(j.at("film_inner_bc").get<std::string>());
    c.film_T_list = j.value("film_T_list", c.film_T_list);
    c.quad_tol = j.value("quad_tol", c.quad_tol);
    c.grad_tol_rel = j.value("grad_tol_rel", c.grad_tol_rel);
    c.grad_tol_abs = j.value("grad_tol_abs", c.grad_tol_abs);
    c.max_iter_factor = j.value("max_iter_factor", c.max_iter_factor);
    c.restarts = j.value("restarts", c.restarts);
    c.xi_quant_step = j.value("xi_quant_step", c.xi_quant_step);
    c.y_quant_step = j.value("y_quant_step", c.y_quant_step);
    c.taylor_correction = j.value("taylor_correction", c.taylor_correction);
    c.fast_quadratic = j.value("fast_quadratic", c.fast_quadratic);
    c.force_generic = j.value("force_generic", c.force_generic);
    c.force_inner_solves = j.value("force_inner_solves", c.force_inner_solves);
    c.max_inner_solves = j.value("max_inner_solves", c.max_inner_solves);
    c.eps_list = j.value("eps_list", c.eps_list);
    c.points_per_fine_period = j.value("points_per_fine_period", c.points_per_fine_period);
    c.rel_tol = j.value("rel_tol", c.rel_tol);
    c.samples = j.value("samples", c.samples);
    c.x_elements = j.value("x_elements", c.x_elements);
    return c;
  }

  SolverConfig solver() const {
    SolverConfig s;
    s.quad_tol = quad_tol;
    s.grad_tol_rel = grad_tol_rel;
    s.grad_tol_abs = grad_tol_abs;
    s.max_iter_factor = max_iter_factor;
    s.restarts = restarts;
    s.seed = seed;
    s.force_generic = force_generic;
    return s;
  }

  ReiterateConfig reiterate() const {
    ReiterateConfig r;
    r.inner_n = inner_n;
    r.inner_T = inner_T;
    r.inner_bc = inner_bc;
    r.outer_n = outer_n;
    if (outer_bc) {
      r.outer_bc = *outer_bc;
      r.outer_bc_set = true;
    }
    r.outer_T_list = outer_T_list;
    r.inner_solver = solver();
    r.outer_solver = solver();
    r.xi_quant_step = xi_quant_step;
    r.y_quant_step = y_quant_step;
    r.taylor_correction = taylor_correction;
    r.fast_quadratic = fast_quadratic && !force_generic;
    r.max_inner_solves = max_inner_solves;
    return r;
  }

  FilmConfig film() const {
    FilmConfig f;
    f.inner_n = film_inner_n;
    f.inner_T = inner_T;
    if (film_inner_bc) f.inner_bc = *film_inner_bc;
    f.membrane_n = membrane_n;
    f.membrane_n3 = membrane_n3;
    f.T_list = film_T_list;
    f.inner_solver = solver();
    f.membrane_solver = solver();
    f.xi_quant_step = xi_quant_step;
    f.y_quant_step = y_quant_step;
    f.taylor_correction = taylor_correction;
    f.fast_quadratic = fast_quadratic && !force_generic;
    f.force_inner_solves = force_inner_solves;
    f.max_inner_solves = max_inner_solves;
    return f;
  }

  DirectSimConfig direct(bool timings) const {
    DirectSimConfig d;
    d.points_per_fine_period = points_per_fine_period;
    d.solver = solver();
    d.record_timings = timings;
    return d;
  }
};

struct JobConfig {
  std::string command;
  json integrand;
  json problem;
  NumericsConfig numerics;
  std::string csv_path;
  std::string json_path;
  std::string corrector_csv;
  bool timings = false;
  std::uint64_t seed = 1;
  int threads = 1;

  static JobConfig parse(const json& j) {
    detail::check_known_keys(
        j, {"command", "integrand", "problem", "numerics", "outputs", "seed", "threads"}, "job");
    JobConfig c;
    c.command = j.at("command").get<std::string>();
    const std::vector<std::string> known = {"cell",   "reiterate", "film",  "membrane",
                                            "direct", "oracle",    "sweep", "validate"};
    contract(std::find(known.begin(), known.end(), c.command) != known.end(),
             "unknown command '" + c.command + "'");
    c.integrand = j.value("integrand", json());
    c.problem = j.value("problem", json::object());
    c.seed = j.value("seed", std::uint64_t(1));
    c.threads = j.value("threads", 1);
    c.numerics = NumericsConfig::parse(j.value("numerics", json()), c.seed);
    if (j.contains("outputs")) {
      const json& o = j.at("outputs");
      detail::check_known_keys(o, {"csv", "json", "corrector_csv", "timings"}, "outputs");
      c.csv_path = o.value("csv", std::string());
      c.json_path = o.value("json", std::string());
      c.corrector_csv = o.value("corrector_csv", std::string());
      c.timings = o.value("timings", false);
    }
    if (c.csv_path.empty()) c.csv_path = c.command + ".csv";
    return c;
  }
};

namespace jobdetail {

struct JobResult {
  Table table;
  json diagnostics;  // JSON-only extras (per_T chains, margins, ...)
  int exit_code = exit_ok;
  std::string summary;
};

inline void append_matrix_cells(std::vector<Cell>& cells, const GradMat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) cells.emplace_back(m.data()[i]);
}

inline std::vector<std::string> matrix_columns(const std::string& prefix, int rows, int cols) {
  std::vector<std::string> names;
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      names.push_back(prefix + "_" + std::to_string(r) + std::to_string(c));
  return names;
}

inline json per_T_json(const std::vector<std::pair<int, Real>>& per_T) {
  json j = json::array();
  for (const auto& [T, v] : per_T) j.push_back({{"T", T}, {"value", v}});
  return j;
}

// --- command implementations -------------------------------------------

inline JobResult run_validate(const JobConfig& cfg) {
  MultiscaleIntegrand f = integrand_from_json(cfg.integrand);
  HypothesisReport report = validate_hypotheses(f, cfg.numerics.samples, cfg.seed);
  Table t({"check", "pass", "worst", "where"});
  for (const auto& c : report.checks)
    t.add_row({c.name, c.pass, c.worst, c.worst_where});
  JobResult r{std::move(t), json(), exit_ok,
              "validate " + f.family + ": " + (report.all_pass() ? "all-pass" : "FAILURES")};
  return r;
}

inline JobResult run_cell(const JobConfig& cfg) {
  MultiscaleIntegrand f = integrand_from_json(cfg.integrand);
  detail::check_known_keys(cfg.problem, {"x", "y", "xi"}, "cell problem");
  const Point x = cfg.problem.contains("x")
                      ? parse_point(cfg.problem.at("x"), f.N, "problem.x")
                      : Point(Point::Zero(f.N));
  const Point y = cfg.problem.contains("y")
                      ? parse_point(cfg.problem.at("y"), f.N, "problem.y")
                      : Point(Point::Zero(f.N));
  const GradMat xi = parse_matrix(cfg.problem.at("xi"), f.d, f.N, "problem.xi");

  std::vector<int> T_list = cfg.numerics.T_list;
  if (T_list.empty())
    T_list = cfg.numerics.bc == BoundaryMode::dirichlet_zero ? std::vector<int>{1, 2, 4}
                                                             : std::vector<int>{cfg.numerics.T};
  CellDensity g = freeze_inner(f, x, y);
  TExtrapolation ext =
      t_extrapolate(g, xi, T_list, cfg.numerics.n, cfg.numerics.bc, cfg.numerics.solver());

  Table t({"T", "value", "grad_norm", "iterations", "converged", "upper_bound_only",
           "zero_corrector_value"});
  bool all_ok = true;
  for (const auto& [T, sol] : ext.per_T) {
    t.add_row({std::int64_t(T), sol.value, sol.grad_norm, std::int64_t(sol.iterations),
               sol.converged, sol.upper_bound_only, sol.zero_corrector_value});
    all_ok = all_ok && sol.converged;
  }
  json diag;
  diag["per_T"] = per_T_json([&] {
    std::vector<std::pair<int, Real>> v;
    for (const auto& [T, sol] : ext.per_T) v.emplace_back(T, sol.value);
    return v;
  }());
  diag["successive_differences"] = ext.successive_differences();

  JobResult r{std::move(t), std::move(diag), all_ok ? exit_ok : exit_solver,
              "cell value=" + format_real(ext.value())};
  if (!cfg.corrector_csv.empty()) {
    const CorrectorField& phi = ext.final_solution().corrector;
    std::vector<std::string> cols;
    for (int k = 0; k < phi.mesh.N; ++k) cols.push_back("z" + std::to_string(k));
    for (int c = 0; c < phi.d; ++c) cols.push_back("phi" + std::to_string(c));
    Table ct(cols);
    for (std::int64_t i = 0; i < phi.mesh.node_count(); ++i) {
      std::vector<Cell> row;
      const Point p = phi.mesh.node_position(phi.mesh.node_multi(i));
      for (int k = 0; k < phi.mesh.N; ++k) row.emplace_back(p[k]);
      for (int c = 0; c < phi.d; ++c) row.emplace_back(phi.values[i * phi.d + c]);
      ct.add_row(std::move(row));
    }
    r.diagnostics["corrector_table"] = cfg.corrector_csv;
    r.diagnostics["corrector_rows"] = ct.row_count();
    // Stored alongside the main table by run_job.
    r.diagnostics["_corrector_csv_text"] = ct.to_csv();
  }
  return r;
}

inline std::vector<std::string> estimate_columns(int d, int N) {
  std::vector<std::string> cols = matrix_columns("xi", d, N);
  for (const char* c : {"value", "converged", "upper_bound_only", "monotone_ok",
                        "inner_solves", "cache_hits"})
    cols.push_back(c);
  return cols;
}

inline std::vector<Cell> estimate_cells(const GradMat& xi, const DensityEstimate& est) {
  std::vector<Cell> cells;
  append_matrix_cells(cells, xi);
  cells.emplace_back(est.value);
  cells.emplace_back(est.converged);
  cells.emplace_back(est.upper_bound_only);
  cells.emplace_back(est.monotone_ok);
  cells.emplace_back(est.inner_solve_count);
  cells.emplace_back(est.cache_hits);
  return cells;
}

inline JobResult run_reiterate(const JobConfig& cfg) {
  MultiscaleIntegrand f = integrand_from_json(cfg.integrand);
  detail::check_known_keys(cfg.problem, {"x", "xi"}, "reiterate problem");
  const Point x = cfg.problem.contains("x")
                      ? parse_point(cfg.problem.at("x"), f.N, "problem.x")
                      : Point(Point::Zero(f.N));
  const GradMat xi = parse_matrix(cfg.problem.at("xi"), f.d, f.N, "problem.xi");
  DensityEstimate est = outer_density(f, x, xi, cfg.numerics.reiterate());

  Table t(estimate_columns(f.d, f.N));
  t.add_row(estimate_cells(xi, est));
  json diag;
  diag["per_T"] = per_T_json(est.per_T);
  diag["growth_lower_margin"] = est.growth_lower_margin;
  diag["growth_upper_margin"] = est.growth_upper_margin;
  return JobResult{std::move(t), std::move(diag), est.converged ? exit_ok : exit_solver,
                   "reiterate value=" + format_real(est.value) +
                       " converged=" + (est.converged ? "1" : "0")};
}

inline JobResult run_sweep(const JobConfig& cfg) {
  MultiscaleIntegrand f = integrand_from_json(cfg.integrand);
  detail::check_known_keys(cfg.problem, {"x", "xi_list"}, "sweep problem");
  const Point x = cfg.problem.contains("x")
                      ? parse_point(cfg.problem.at("x"), f.N, "problem.x")
                      : Point(Point::Zero(f.N));
  contract(cfg.problem.contains("xi_list"), "sweep needs problem.xi_list");
  std::vector<GradMat> xi_list;
  for (const auto& jm : cfg.problem.at("xi_list"))
    xi_list.push_back(parse_matrix(jm, f.d, f.N, "problem.xi_list[i]"));

  std::vector<SweepRow> rows = density_sweep(f, x, xi_list, cfg.numerics.reiterate(), cfg.threads);
  std::vector<std::string> cols = estimate_columns(f.d, f.N);
  cols.push_back("error");
  Table t(cols);
  bool all_ok = true;
  for (const auto& row : rows) {
    if (row.estimate) {
      auto cells = estimate_cells(row.xi, *row.estimate);
      cells.emplace_back(std::string());
      t.add_row(std::move(cells));
      all_ok = all_ok && row.estimate->converged;
    } else {
      std::vector<Cell> cells;
      append_matrix_cells(cells, row.xi);
      cells.emplace_back(std::numeric_limits<Real>::quiet_NaN());
      cells.emplace_back(false);
      cells.emplace_back(false);
      cells.emplace_back(false);
      cells.emplace_back(std::int64_t(0));
      cells.emplace_back(std::int64_t(0));
      cells.emplace_back(row.error);
      t.add_row(std::move(cells));
      all_ok = false;
    }
  }
  return JobResult{std::move(t), json(), all_ok ? exit_ok : exit_solver,
                   "sweep rows=" + std::to_string(rows.size())};
}

inline JobResult run_film(const JobConfig& cfg) {
  FilmIntegrand W = film_integrand_from_json(cfg.integrand);
  detail::check_known_keys(cfg.problem, {"x", "y_alpha", "xi"}, "film problem");
  const Point x = cfg.problem.contains("x")
                      ? parse_point(cfg.problem.at("x"), 3, "problem.x")
                      : Point(Point::Zero(3));
  const Point y_alpha = cfg.problem.contains("y_alpha")
                            ? parse_point(cfg.problem.at("y_alpha"), 2, "problem.y_alpha")
                            : Point(Point::Zero(2));
  const GradMat xi = parse_matrix(cfg.problem.at("xi"), 3, 3, "problem.xi");
  FilmInnerResult res = film_inner_density(W, x, y_alpha, xi, cfg.numerics.film());

  std::vector<std::string> cols = matrix_columns("xi", 3, 3);
  for (const char* c : {"value", "converged", "upper_bound_only"}) cols.push_back(c);
  Table t(cols);
  std::vector<Cell> cells;
  append_matrix_cells(cells, xi);
  cells.emplace_back(res.value);
  cells.emplace_back(res.converged);
  cells.emplace_back(res.upper_bound_only);
  t.add_row(std::move(cells));
  json diag;
  diag["stress"] = std::vector<Real>(res.stress.data(), res.stress.data() + 9);
  return JobResult{std::move(t), std::move(diag), res.converged ? exit_ok : exit_solver,
                   "film value=" + format_real(res.value)};
}

inline JobResult run_membrane(const JobConfig& cfg) {
  FilmIntegrand W = film_integrand_from_json(cfg.integrand);
  detail::check_known_keys(cfg.problem, {"x_alpha", "xi_bar"}, "membrane problem");
  const Point x_alpha = cfg.problem.contains("x_alpha")
                            ? parse_point(cfg.problem.at("x_alpha"), 2, "problem.x_alpha")
                            : Point(Point::Zero(2));
  const GradMat xi_bar = parse_matrix(cfg.problem.at("xi_bar"), 3, 2, "problem.xi_bar");
  MembraneEstimate est = membrane_density(W, x_alpha, xi_bar, cfg.numerics.film());

  std::vector<std::string> cols = matrix_columns("xibar", 3, 2);
  for (const char* c :
       {"value", "converged", "upper_bound_only", "monotone_ok", "corrector_sup"})
    cols.push_back(c);
  Table t(cols);
  std::vector<Cell> cells;
  append_matrix_cells(cells, xi_bar);
  cells.emplace_back(est.value);
  cells.emplace_back(est.converged);
  cells.emplace_back(est.upper_bound_only);
  cells.emplace_back(est.monotone_ok);
  cells.emplace_back(est.corrector_sup);
  t.add_row(std::move(cells));
  json diag;
  diag["per_T"] = per_T_json(est.per_T);
  diag["inner_solves"] = est.inner_solve_count;
  diag["cache_hits"] = est.cache_hits;
  diag["growth_lower_margin"] = est.growth_lower_margin;
  diag["growth_upper_margin"] = est.growth_upper_margin;
  return JobResult{std::move(t), std::move(diag), est.converged ? exit_ok : exit_solver,
                   "membrane value=" + format_real(est.value)};
}

inline JobResult run_direct(const JobConfig& cfg) {
  detail::check_known_keys(cfg.problem, {"variant", "slope", "xi_col", "eps_list"},
                           "direct problem");
  const std::string variant = cfg.problem.value("variant", std::string("bulk_1d"));
  std::vector<Real> eps_list = cfg.numerics.eps_list;
  if (cfg.problem.contains("eps_list"))
    eps_list = cfg.problem.at("eps_list").get<std::vector<Real>>();
  contract(!eps_list.empty(), "direct command needs eps_list");

  if (variant == "bulk_1d") {
    MultiscaleIntegrand f = integrand_from_json(cfg.integrand);
    const Real slope = cfg.problem.value("slope", 1.0);
    GammaGapReport report =
        gamma_gap_report(f, slope, eps_list, cfg.numerics.direct(cfg.timings),
                         cfg.numerics.reiterate(), cfg.numerics.rel_tol, cfg.threads);
    Table t({"eps", "min_F_eps", "min_F_hom", "gap", "dofs", "wall_time_ms"});
    bool all_ok = true;
    for (const auto& row : report.rows) {
      t.add_row({row.eps, row.min_F_eps, row.min_F_hom, row.gap, row.dofs, row.wall_time_ms});
      all_ok = all_ok && row.error.empty();
    }
    json diag;
    diag["gaps_decreasing"] = report.gaps_decreasing;
    diag["final_gap_ok"] = report.final_gap_ok;
    diag["verdict"] = report.verdict();
    return JobResult{std::move(t), std::move(diag), all_ok ? exit_ok : exit_solver,
                     std::string("direct bulk_1d verdict=") + (report.verdict() ? "pass" : "fail")};
  }

  contract(variant == "film_strip", "direct variant must be bulk_1d or film_strip");
  FilmIntegrand W = film_integrand_from_json(cfg.integrand);
  Eigen::Vector3d xi_col = Eigen::Vector3d::Zero();
  if (cfg.problem.contains("xi_col")) {
    const Point p = parse_point(cfg.problem.at("xi_col"), 3, "problem.xi_col");
    for (int i = 0; i < 3; ++i) xi_col[i] = p[i];
  } else {
    xi_col[0] = 1.0;
  }
  GradMat xi_bar = GradMat::Zero(3, 2);
  xi_bar.col(0) = xi_col;
  MembraneEstimate mem = membrane_density(W, Point(Point::Zero(2)), xi_bar, cfg.numerics.film());
  const Real prediction = 2.0 * mem.value;

  Table t({"eps", "energy", "prediction", "gap", "dofs", "wall_time_ms"});
  bool all_ok = mem.converged;
  for (Real eps : eps_list) {
    DirectSimConfig dcfg = cfg.numerics.direct(cfg.timings);
    dcfg.eps = eps;
    const auto t0 = std::chrono::steady_clock::now();
    const Real energy = minimize_film_eps_strip(W, xi_col, dcfg);
    Real ms = 0.0;
    if (cfg.timings)
      ms = std::chrono::duration<Real, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const std::int64_t dofs =
        dcfg.fine_elements() * std::llround(2.0 * dcfg.points_per_fine_period / eps);
    t.add_row({eps, energy, prediction, std::abs(energy - prediction), dofs, ms});
  }
  return JobResult{std::move(t), json(), all_ok ? exit_ok : exit_solver,
                   "direct film_strip prediction=" + format_real(prediction)};
}

inline JobResult run_oracle(const JobConfig& cfg) {
  detail::check_known_keys(cfg.problem, {"phases", "inner_phases", "mode", "p"}, "oracle problem");
  contract(cfg.problem.contains("phases"), "oracle needs problem.phases");
  auto parse_phases = [](const json& j) {
    LaminatePhases ph;
    for (const auto& row : j) {
      contract(row.is_array() && row.size() == 2, "phases rows must be [fraction, coefficient]");
      ph.emplace_back(row[0].get<Real>(), row[1].get<Real>());
    }
    return ph;
  };
  const LaminatePhases phases = parse_phases(cfg.problem.at("phases"));
  LaminatePhases inner;
  if (cfg.problem.contains("inner_phases")) inner = parse_phases(cfg.problem.at("inner_phases"));
  const std::string mode_s = cfg.problem.value("mode", std::string("harmonic"));
  const Real value = laminate_oracle(phases, laminate_mode_from_string(mode_s), inner,
                                     cfg.problem.value("p", 2.0));
  Table t({"mode", "value"});
  t.add_row({mode_s, value});
  return JobResult{std::move(t), json(), exit_ok, "oracle " + mode_s + "=" + format_real(value)};
}

}  // namespace jobdetail

/// Execute a job config. Writes the CSV (and optional JSON mirror), prints a
/// one-line summary to `out` and diagnostics to `err`, and returns the
/// process exit code.
inline int run_job(const std::string& config_path, const std::string& out_dir,
                   int threads_override, std::optional<std::uint64_t> seed_override,
                   std::ostream& out, std::ostream& err) {
  try {
    std::ifstream is(config_path);
    if (!is) {
      err << "error: cannot read config '" << config_path << "'\n";
      return exit_contract;
    }
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      err << "error: config is not valid JSON: " << e.what() << "\n";
      return exit_contract;
    }
    JobConfig cfg = JobConfig::parse(j);
    if (seed_override) {
      cfg.seed = *seed_override;
      cfg.numerics.seed = *seed_override;
    }
    if (threads_override > 0) cfg.threads = threads_override;

    jobdetail::JobResult result = [&]() {
      if (cfg.command == "validate") return jobdetail::run_validate(cfg);
      if (cfg.command == "cell") return jobdetail::run_cell(cfg);
      if (cfg.command == "reiterate") return jobdetail::run_reiterate(cfg);
      if (cfg.command == "sweep") return jobdetail::run_sweep(cfg);
      if (cfg.command == "film") return jobdetail::run_film(cfg);
      if (cfg.command == "membrane") return jobdetail::run_membrane(cfg);
      if (cfg.command == "direct") return jobdetail::run_direct(cfg);
      return jobdetail::run_oracle(cfg);
    }();

    const std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const std::filesystem::path csv_path = dir / cfg.csv_path;
    result.table.write_csv(csv_path);
    if (result.diagnostics.contains("_corrector_csv_text")) {
      Table::write_text(dir / cfg.corrector_csv,
                        result.diagnostics.at("_corrector_csv_text").get<std::string>());
      result.diagnostics.erase("_corrector_csv_text");
    }
    if (!cfg.json_path.empty()) {
      json meta;
      meta["command"] = cfg.command;
      meta["seed"] = cfg.seed;
      meta["threads"] = cfg.threads;
      meta["diagnostics"] = result.diagnostics;
      result.table.write_json(dir / cfg.json_path, meta);
    }
    out << result.summary << " -> " << csv_path.string() << "\n";
    return result.exit_code;
  } catch (const ContractViolation& e) {
    err << "contract violation: " << e.what() << "\n";
    return exit_contract;
  } catch (const EvalError& e) {
    err << "integrand error: " << e.what() << "\n";
    return exit_contract;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return exit_io;
  } catch (const SolverError& e) {
    err << "solver error: " << e.what() << "\n";
    return exit_solver;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return exit_contract;
  }
}

}  // namespace homoglab
