#pragma once

// Monte Carlo experiments driven by an ExperimentConfig. Replicate r uses the
// seed mix_seed(cfg.seed, r); replicates may run on several threads but every
// reduction walks them in index order, so reports do not depend on the
// thread count.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "snse/config.hpp"
#include "snse/harness.hpp"

namespace snse {

struct RunOptions {
  int threads = 1;
  /// Progress messages; may be empty.
  std::function<void(const std::string&)> log;
};

/// Calls fn(i) for i in [0, count) on up to `threads` threads. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

GridPtr config_grid(const ExperimentConfig& cfg, std::optional<int> cutoff = std::nullopt);
QSpec config_q(const ExperimentConfig& cfg, GridPtr grid);
SchemeParams config_scheme(const ExperimentConfig& cfg, int steps, SchemeKind kind);
/// u0 for replicate seed `seed`; only the gaussian kind depends on it.
SpectralField initial_condition(const ExperimentConfig& cfg, GridPtr grid, std::uint64_t seed);
/// gamma0 from the config, or half the critical value 1 / (2 max lambda q0)
/// for Gaussian data; absent for deterministic u0.
std::optional<double> initial_gamma0(const ExperimentConfig& cfg, const GridPtr& grid);

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int replicate);

/// Time sweep over cfg.levels against a reference on cfg.reference steps.
/// With advection the reference is the fully implicit scheme; without it the
/// exact OU solution. The coarse runs use `coarse_kind`.
RateReport run_time_sweep(const ExperimentConfig& cfg, SchemeKind coarse_kind,
                          const RunOptions& opts);

/// Taylor-Hood meshes n in cfg.levels against the fully implicit spectral
/// scheme on cfg.reference_cutoff, all on cfg.steps time steps.
RateReport run_space_sweep(const ExperimentConfig& cfg, const RunOptions& opts);

struct OuVarianceCheck {
  double time = 0.0;
  int coordinates = 0;
  double worst_z = 0.0;  // max |sample var - exact| / standard error
  bool pass = false;
};

struct OuValidation {
  std::vector<OuVarianceCheck> variance;
  RateReport monte_carlo;          // implicit scheme vs exact OU, coupled
  std::vector<double> oracle_l2;   // max_l E|e_l|^2 per level
  std::vector<double> oracle_v;    // nu k sum E|A^{1/2} e_l|^2 per level
  std::optional<FitResult> oracle_fit_l2;
  std::optional<FitResult> oracle_fit_v;
  /// Largest relative gap between the field computation and the scalar
  /// brute force, over replicates and levels.
  double bruteforce_gap = 0.0;
};

/// Variances of the exact OU marginals at T/4, T/2, T, and the implicit
/// scheme's error slopes against both oracles. Forces B = 0.
OuValidation run_ou_validation(const ExperimentConfig& cfg, const RunOptions& opts);

struct MomentRow {
  std::string family;  // "spectral" or "fem"
  int level = 0;       // N, or n for fem rows
  std::string name;
  MeanCi estimate;
};

struct MomentStability {
  std::string family;
  std::string name;
  double ratio = 0.0;  // max / min of the level means
  bool pass = false;   // ratio < 2
};

struct MomentReport {
  double order = 2.0;
  std::vector<MomentRow> rows;
  std::vector<MomentStability> stability;
};

/// Spectral functionals at N in cfg.levels (coupled through one path per
/// replicate on the finest level) and, when cfg.fem_levels is not empty,
/// Taylor-Hood functionals on those meshes at N = cfg.steps.
MomentReport run_moments(const ExperimentConfig& cfg, const RunOptions& opts);

struct ExpMomentRow {
  std::string functional;  // "sup_V" or "sup_V_dissipation"
  double alpha = 0.0;
  ExpMomentEstimate half;  // first half of the replicates
  ExpMomentEstimate full;
  double ratio = 0.0;      // full mean / half mean
  bool stable = false;     // |ratio - 1| <= 0.2 and no flagged instability
};

std::vector<ExpMomentRow> run_exp_moments(const ExperimentConfig& cfg, const RunOptions& opts);

struct RegularityReport {
  RateReport l2;
  RateReport v;
};

/// Trajectories on cfg.steps steps; cfg.lags dyadic lags.
RegularityReport run_regularity(const ExperimentConfig& cfg, const RunOptions& opts);

/// Constants from the config, else estimated on the spectral grid.
ConstantEstimate config_constants(const ExperimentConfig& cfg);
ConditionReport run_conditions(const ExperimentConfig& cfg);

}  // namespace snse
