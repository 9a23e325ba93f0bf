#pragma once

// Subcommand dispatch shared by the command-line tool and the tests.

#include <iosfwd>
#include <string>
#include <vector>

#include "snse/config.hpp"
#include "snse/experiments.hpp"

namespace snse {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitSolver = 3,
  kExitAborted = 4,
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand, writing artifacts under cfg.output_dir and a short
/// summary to `out`. Solver failures return kExitSolver, aborted sweep levels
/// kExitAborted; configuration problems throw ConfigError.
int run_command(const std::string& subcommand, const ExperimentConfig& cfg,
                const RunOptions& opts, std::ostream& out);

}  // namespace snse
