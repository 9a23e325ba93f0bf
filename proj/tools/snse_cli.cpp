// snse: stochastic Navier-Stokes discretization experiments.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "snse/config.hpp"
#include "snse/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Strong-convergence experiments for the stochastic 2D Navier-Stokes equations"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 1;
  std::string format;
  bool quiet = false;
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed (overrides noise.seed)");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir and SNSE_OUTPUT_DIR)");
  app.add_option("--threads", threads, "Worker threads for replicates")->check(CLI::PositiveNumber);
  app.add_option("--format", format, "Artifact format")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--quiet", quiet, "Suppress progress messages");
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Print the effective configuration and exit");

  const std::map<std::string, std::string> about{
      {"simulate", "One trajectory; caches the noise path and the states"},
      {"converge-time", "Strong error against a fine reference over sweep.levels (N)"},
      {"converge-space", "Taylor-Hood error against a spectral reference over sweep.levels (n)"},
      {"converge-divfree", "Time sweep of the semi-implicit scheme"},
      {"ou-validate", "Linear problem against its exact solution and moment oracle"},
      {"moments", "Moment functionals across discretization levels"},
      {"exp-moments", "Exponential moments of the V-norm functionals"},
      {"regularity", "Time-increment exponents of the fully implicit scheme"},
      {"check-conditions", "Noise-size and gamma0 thresholds of the convergence results"},
      {"estimate-constants", "Lower bounds for the interpolation constants"},
      {"dump-matrices", "Taylor-Hood matrices as sparse triplets"},
  };
  for (const auto& name : snse::subcommands()) {
    auto it = about.find(name);
    app.add_subcommand(name, it == about.end() ? "" : it->second);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? snse::kExitOk : snse::kExitConfig;
  }

  try {
    snse::ExperimentConfig cfg = config_path.empty() ? snse::parse_config("")
                                                     : snse::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (const char* env = std::getenv("SNSE_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (!format.empty()) cfg.format = format;
    if (print_config) {
      std::cout << snse::echo(cfg);
      return snse::kExitOk;
    }

    if (app.get_subcommands().empty()) {
      std::cerr << "A subcommand is required\n\n" << app.help();
      return snse::kExitConfig;
    }

    snse::RunOptions opts;
    opts.threads = threads;
    if (!quiet) opts.log = [](const std::string& m) { std::cerr << m << "\n"; };
    const std::string sub = app.get_subcommands().front()->get_name();
    return snse::run_command(sub, cfg, opts, std::cout);
  } catch (const snse::ConfigError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return snse::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return snse::kExitFailure;
  }
}
