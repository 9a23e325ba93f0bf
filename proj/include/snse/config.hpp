#pragma once

// Experiment configuration: a flat INI schema with exhaustive validation.
//
//   [physical]   length viscosity horizon
//   [spectral]   cutoff
//   [noise]      scale | trace, decay, seed, policy (warn|reject)
//   [initial]    kind (zero|shear|random-smooth|gaussian), amplitude, decay, seed, gamma0
//   [scheme]     kind (fully-implicit|semi-implicit|ou-exact), tol_fp, max_iter, advection
//   [sweep]      variable (N|n), levels, reference, replicates, steps, reference_cutoff
//   [analysis]   order, alpha, lags, fem_levels
//   [constants]  cbar, sigma, samples, mu
//   [output]     dir, format (csv|json)

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snse/time_scheme.hpp"

namespace snse {

enum class InitialKind { Zero, Shear, RandomSmooth, Gaussian };

struct ExperimentConfig {
  // physical
  double length = 2.0 * std::numbers::pi;
  double viscosity = 1.0;
  double horizon = 1.0;
  // spectral
  int cutoff = 16;
  // noise: exactly one of scale / trace; neither means trace 0
  std::optional<double> noise_scale;
  std::optional<double> noise_trace;
  double noise_decay = 2.5;
  std::uint64_t seed = 1;
  bool reject_rough_noise = false;
  // initial condition
  InitialKind initial = InitialKind::Zero;
  double initial_amplitude = 1.0;
  /// random-smooth: stream amplitude lambda^{-decay}; gaussian: Q0 = amplitude lambda^{-decay}
  double initial_decay = 1.5;
  std::uint64_t initial_seed = 7;
  std::optional<double> gamma0;
  // scheme
  SchemeKind scheme = SchemeKind::FullyImplicit;
  double tol_fp = 1e-10;
  int max_iter = 100;
  bool advection = true;
  // sweep
  std::string sweep_variable = "N";
  std::vector<int> levels{8, 16, 32, 64};
  int reference = 512;  // N_ref for time sweeps
  int replicates = 128;
  int steps = 256;  // time steps of space sweeps and single runs
  int reference_cutoff = 96;  // spectral reference of space sweeps
  // analysis
  double order = 2.0;
  std::vector<double> alpha{0.1};
  int lags = 6;
  std::vector<int> fem_levels{4, 8};
  // constants
  std::optional<double> cbar;
  std::optional<double> sigma;
  int constant_samples = 1000;
  double mu = 0.5;
  // output
  std::string output_dir = "out";
  std::string format = "csv";
};

/// Every violation found, one message per entry.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

/// Parses INI text. Unknown sections and keys are rejected with the nearest
/// known name as a suggestion; all problems are collected before throwing.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Invariant checks on an already populated config.
std::vector<std::string> validate(const ExperimentConfig& cfg);

/// Canonical INI text with every key written; parse_config(echo(c)) == c.
std::string echo(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

std::string to_string(InitialKind kind);

/// Levenshtein distance.
int edit_distance(const std::string& a, const std::string& b);

}  // namespace snse
