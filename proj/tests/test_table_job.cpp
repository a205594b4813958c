#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace homoglab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("homoglab_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

int run(const fs::path& config, const fs::path& out_dir) {
  std::ostringstream out, err;
  return run_job(config.string(), out_dir.string(), 0, std::nullopt, out, err);
}

}  // namespace

TEST_CASE("format_real round-trips doubles at 17 significant digits") {
  Rng rng = make_rng(100);
  for (int i = 0; i < 1000; ++i) {
    const Real v = rng.normal() * std::pow(10.0, rng.integer(-12, 12));
    const std::string s = format_real(v);
    REQUIRE(std::stod(s) == v);
  }
  CHECK(format_real(1.0) == "1");
  CHECK(format_real(0.1) == "0.10000000000000001");
}

TEST_CASE("table serialization") {
  SECTION("empty row list produces a header-only CSV") {
    Table t({"a", "b"});
    CHECK(t.to_csv() == "a,b\n");
  }
  SECTION("gamma gap rows serialize to a 6-column line") {
    Table t({"eps", "min_F_eps", "min_F_hom", "gap", "dofs", "wall_time_ms"});
    t.add_row({0.25, 2.88, 2.88, 0.0, std::int64_t(128), 0.0});
    const std::string csv = t.to_csv();
    const std::string line = csv.substr(csv.find('\n') + 1);
    CHECK(std::count(line.begin(), line.end(), ',') == 5);
    CHECK(line == "0.25,2.8799999999999999,2.8799999999999999,0,128,0\n");
  }
  SECTION("row width is checked") {
    Table t({"a", "b"});
    CHECK_THROWS_AS(t.add_row({1.0}), ContractViolation);
  }
}

TEST_CASE("job runner") {
  const fs::path dir = temp_dir("jobs");

  SECTION("validate job on |xi|^2 exits 0 and reports all-pass") {
    const json cfg = {{"command", "validate"},
                      {"integrand", {{"family", "quadratic"}, {"dims", {{"N", 2}, {"d", 1}}}, {"beta", 2.0}}},
                      {"numerics", {{"samples", 100}}},
                      {"outputs", {{"csv", "v.csv"}}}};
    write(dir / "v.json", cfg.dump());
    CHECK(run(dir / "v.json", dir) == exit_ok);
    const std::string csv = slurp(dir / "v.csv");
    CHECK(csv.find("periodicity,1") != std::string::npos);
    CHECK(csv.find("growth,1") != std::string::npos);
  }

  SECTION("beta = 0 in the config is a contract violation (exit 2)") {
    const json cfg = {{"command", "cell"},
                      {"integrand", {{"family", "quadratic"}, {"dims", {{"N", 1}, {"d", 1}}}, {"beta", 0.0}}},
                      {"problem", {{"xi", {{1.0}}}}}};
    write(dir / "b.json", cfg.dump());
    CHECK(run(dir / "b.json", dir) == exit_contract);
  }

  SECTION("unknown top-level keys are rejected (exit 2)") {
    const json cfg = {{"command", "oracle"},
                      {"problem", {{"phases", {{0.5, 1.0}, {0.5, 4.0}}}, {"mode", "harmonic"}}},
                      {"surprise", 1}};
    write(dir / "u.json", cfg.dump());
    CHECK(run(dir / "u.json", dir) == exit_contract);
  }

  SECTION("missing config file exits 2") {
    CHECK(run(dir / "nope.json", dir) == exit_contract);
  }

  SECTION("oracle job emits the iterated laminate value") {
    const json cfg = {{"command", "oracle"},
                      {"problem",
                       {{"phases", {{0.5, 1.0}, {0.5, 4.0}}},
                        {"inner_phases", {{0.5, 1.0}, {0.5, 9.0}}},
                        {"mode", "iterated"}}},
                      {"outputs", {{"csv", "o.csv"}}}};
    write(dir / "o.json", cfg.dump());
    CHECK(run(dir / "o.json", dir) == exit_ok);
    CHECK(slurp(dir / "o.csv") == "mode,value\niterated,2.8799999999999999\n");
  }

  SECTION("reiterate job writes the expected value and a JSON mirror") {
    const json cfg = {
        {"command", "reiterate"},
        {"integrand",
         {{"family", "quadratic"},
          {"dims", {{"N", 1}, {"d", 1}}},
          {"coefficient",
           {{"factors",
             {{{"var", "y"}, {"type", "laminate"}, {"axis", 0}, {"fractions", {0.5, 0.5}}, {"values", {1, 4}}},
              {{"var", "z"}, {"type", "laminate"}, {"axis", 0}, {"fractions", {0.5, 0.5}}, {"values", {1, 9}}}}}}}}},
        {"problem", {{"xi", {{1.0}}}}},
        {"numerics", {{"inner_n", 64}, {"outer_n", 64}}},
        {"outputs", {{"csv", "r.csv"}, {"json", "r_mirror.json"}}},
        {"seed", 3}};
    write(dir / "r.json", cfg.dump());
    CHECK(run(dir / "r.json", dir) == exit_ok);
    const std::string csv = slurp(dir / "r.csv");
    CHECK(csv.find("2.88") != std::string::npos);
    const json mj = json::parse(slurp(dir / "r_mirror.json"));
    CHECK(mj["meta"]["seed"] == 3);
    CHECK(mj["rows"].size() == 1);
  }

  SECTION("rerunning the same config and seed is byte-identical") {
    const json cfg = {{"command", "cell"},
                      {"integrand",
                       {{"family", "quadratic"},
                        {"dims", {{"N", 1}, {"d", 1}}},
                        {"coefficient",
                         {{"factors",
                           {{{"var", "z"}, {"type", "laminate"}, {"axis", 0},
                             {"fractions", {0.5, 0.5}}, {"values", {1, 4}}}}}}}}},
                      {"problem", {{"xi", {{1.0}}}}},
                      {"numerics", {{"n", 64}, {"bc", "dirichlet"}, {"T_list", {1, 2}}}},
                      {"outputs", {{"csv", "c.csv"}, {"corrector_csv", "phi.csv"}}},
                      {"seed", 11}};
    write(dir / "c.json", cfg.dump());
    const fs::path d1 = temp_dir("rerun1"), d2 = temp_dir("rerun2");
    REQUIRE(run(dir / "c.json", d1) == exit_ok);
    REQUIRE(run(dir / "c.json", d2) == exit_ok);
    CHECK(slurp(d1 / "c.csv") == slurp(d2 / "c.csv"));
    CHECK(slurp(d1 / "phi.csv") == slurp(d2 / "phi.csv"));
    CHECK(slurp(d1 / "c.csv").substr(0, 2) == "T,");
  }

  SECTION("unknown command is rejected") {
    json cfg = {{"command", "warp"}};
    write(dir / "w.json", cfg.dump());
    CHECK(run(dir / "w.json", dir) == exit_contract);
  }
}

TEST_CASE("direct job emits the spec'd 6-column gap table") {
  const fs::path dir = temp_dir("direct_job");
  const json cfg = {
      {"command", "direct"},
      {"integrand",
       {{"family", "quadratic"},
        {"dims", {{"N", 1}, {"d", 1}}},
        {"coefficient",
         {{"factors",
           {{{"var", "y"}, {"type", "laminate"}, {"axis", 0}, {"fractions", {0.5, 0.5}}, {"values", {1, 4}}},
            {{"var", "z"}, {"type", "laminate"}, {"axis", 0}, {"fractions", {0.5, 0.5}}, {"values", {1, 9}}}}}}}}},
      {"problem", {{"variant", "bulk_1d"}, {"slope", 1.0}, {"eps_list", {0.25, 0.125}}}},
      {"numerics", {{"inner_n", 64}, {"outer_n", 64}, {"points_per_fine_period", 8}}},
      {"outputs", {{"csv", "g.csv"}, {"json", "g_mirror.json"}}}};
  write(dir / "g.json", cfg.dump());
  REQUIRE(run(dir / "g.json", dir) == exit_ok);
  const std::string csv = slurp(dir / "g.csv");
  CHECK(csv.substr(0, csv.find('\n')) == "eps,min_F_eps,min_F_hom,gap,dofs,wall_time_ms");
  const json mj = json::parse(slurp(dir / "g_mirror.json"));
  CHECK(mj["meta"]["diagnostics"]["verdict"] == true);
  // timings default off: the wall_time_ms column is identically zero
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  while (std::getline(lines, line)) CHECK(line.substr(line.rfind(',') + 1) == "0");
}
