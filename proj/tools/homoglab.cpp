// homoglab CLI: run JSON-described jobs against the solver library.
//
//   homoglab <command> --config job.json [--out-dir D] [--threads K] [--seed S]
//
// Exit codes: 0 success, 2 contract violation (bad config or integrand),
// 3 solver non-convergence (partial outputs written), 4 output IO failure.

#include <homoglab/homoglab.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"homoglab: reiterated-homogenization and thin-film effective densities"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  const std::vector<std::string> commands = {"cell",   "reiterate", "film",  "membrane",
                                             "direct", "oracle",    "sweep", "validate"};
  for (const std::string& name : commands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "job config JSON")->required();
    sub->add_option("--out-dir", out_dir, "output directory (default .)");
    sub->add_option("--threads", threads, "worker threads (default from config, 1)");
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  // The subcommand must agree with the config's command field; run_job
  // reparses the config, so check here before dispatching.
  try {
    std::ifstream is(config_path);
    if (!is) {
      std::cerr << "error: cannot read config '" << config_path << "'\n";
      return homoglab::exit_contract;
    }
    const auto j = homoglab::json::parse(is);
    const std::string cfg_command = j.value("command", command);
    if (cfg_command != command) {
      std::cerr << "error: config command '" << cfg_command << "' does not match subcommand '"
                << command << "'\n";
      return homoglab::exit_contract;
    }
  } catch (const homoglab::json::exception& e) {
    std::cerr << "error: config is not valid JSON: " << e.what() << "\n";
    return homoglab::exit_contract;
  }

  return homoglab::run_job(config_path, out_dir, threads,
                           seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                           std::cout, std::cerr);
}
