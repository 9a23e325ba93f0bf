#pragma once

// Strong-error functionals, Monte Carlo statistics, rate fitting, moment
// estimators, constant estimation and the hypothesis checker.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snse/fem.hpp"
#include "snse/noise.hpp"
#include "snse/spectral.hpp"
#include "snse/time_scheme.hpp"

namespace snse {

// ---------------------------------------------------------------- statistics

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // normal-approximation 95%
  int count = 0;
};

/// Mean and 95% half-width 1.96 s / sqrt(n), summed in input order.
MeanCi mean_ci(std::span<const double> values);

struct RatePoint {
  double scale = 0.0;
  double value = 0.0;
  double weight = 1.0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;  // log(value) = intercept + slope * log(scale)
  double r2 = 0.0;
  double slope_stderr = 0.0;
  int points = 0;
};

/// Weighted least squares of log(value) on log(scale). Points with
/// nonpositive scale, value or weight are skipped; fewer than 3 usable
/// points throw std::invalid_argument.
FitResult fit_rate(std::span<const RatePoint> points);

// ---------------------------------------------------------------- errors

struct ErrorSample {
  std::uint64_t seed = 0;
  /// max_{0 <= l <= N} |e_l|^2
  double max_l2_sq = 0.0;
  /// nu k sum_{l=1}^N |A^{1/2} e_l|^2
  double dissipation = 0.0;
  bool valid = true;
};

/// Coupled comparison on the coarse grid: e_l = ref(t_l) - coarse(t_l), the
/// reference subsampled. Throws if the coarse step count does not divide the
/// reference one, or the horizons differ.
ErrorSample strong_error(const Trajectory& ref, const Trajectory& coarse, double nu);

/// Spectral reference against a finite-element trajectory on the same time
/// grid (or a refinement of it); the reference is interpolated at the nodes.
ErrorSample strong_error(const Trajectory& ref, const FemTrajectory& coarse, const FemSystem& sys,
                         double nu);

struct RateRow {
  int level = 0;        // N or n
  double scale = 0.0;   // k or h
  MeanCi l2;            // of max_l |e_l|^2
  MeanCi v;             // of nu k sum |A^{1/2} e_l|^2
  int replicates = 0;
  int invalid = 0;
  bool aborted = false;  // more than 10% invalid replicates
};

struct RateReport {
  std::string sweep_var;
  std::vector<RateRow> rows;
  std::optional<FitResult> fit_l2;
  std::optional<FitResult> fit_v;
  /// Slope of the L2 fit without the coarsest level, when it can be fitted.
  std::optional<double> slope_without_coarsest;
  std::vector<std::string> notes;
};

/// Aggregates per-level samples. Invalid samples are counted, not averaged;
/// a level with more than 10% invalid is marked aborted. Slopes use only
/// rows whose half-width is below 30% of their mean, weighted by inverse
/// variance (uniformly when any usable half-width is zero).
RateReport build_rate_report(std::string sweep_var, std::span<const int> levels,
                             std::span<const double> scales,
                             const std::vector<std::vector<ErrorSample>>& samples);

/// Fits the rows of a report that pass the 30% rule; the selector picks l2
/// (false) or v (true).
std::optional<FitResult> fit_report_rows(std::span<const RateRow> rows, bool use_v);

// ---------------------------------------------------------------- OU oracle

/// Exact second moments of the implicit-Euler error against the exact
/// Ornstein-Uhlenbeck solution for one real coordinate: the pair (exact,
/// scheme) is propagated in law over every coarse step.
struct OuErrorMoments {
  std::vector<double> mean_sq;  // E e_l^2, l = 0..N
};

OuErrorMoments ou_scalar_error_moments(double a, double q, double x0, double horizon, int steps);

/// E|e_l|^2 and E|A^{1/2} e_l|^2 summed over all coordinates of u0 and Q,
/// for the implicit Euler scheme with B = 0.
struct OuFieldErrorMoments {
  std::vector<double> l2_sq;  // l = 0..N
  std::vector<double> v_sq;
  /// nu k sum_{l >= 1} E|A^{1/2} e_l|^2
  double dissipation = 0.0;
  /// max_l E|e_l|^2
  double max_l2_sq = 0.0;
};

OuFieldErrorMoments ou_field_error_moments(const SpectralField& u0, const QSpec& q, double nu,
                                           double horizon, int steps);

/// Pathwise per-coordinate brute force: implicit Euler and the exact OU
/// update run one real coordinate at a time from the path's increments and
/// the same convolution draws as ou_exact_trajectory.
ErrorSample ou_bruteforce_error(const SpectralField& u0, const NoisePath& path, double nu,
                                int steps);

/// Per-mode OU variance q (1 - e^{-2 nu lambda t}) / (2 nu lambda) of each
/// real coordinate started from zero.
double ou_variance(double q, double nu, double lambda, double t);

// ---------------------------------------------------------------- moments

struct NamedEstimate {
  std::string name;
  MeanCi estimate;
};

/// Spectral-scheme functionals of order q per replicate:
///   sup_V       max_l |A^{1/2}u^l|^q
///   dissipation nu k sum_l |A^{1/2}u^l|^{q-2} |A u^l|^2
///   cross       sum_l |A^{1/2}(u^l - u^{l-1})|^2 |A^{1/2}u^l|^2
///   increments  (sum_l |A^{1/2}(u^l - u^{l-1})|^2)^q
///   energy      (nu k sum_l |A u^l|^2)^q
///   pressure    (k sum_l |grad pi^l|^2)^q, grad pi = (I - P)(u . grad) u
std::vector<double> trajectory_functionals(const Trajectory& traj, double q, bool advection);
std::vector<std::string> trajectory_functional_names();

/// FEM functionals of order p:
///   sup_L2      max_l |U^l|^p
///   dissipation nu k sum_l |U^l|^{p-2} |A^{1/2}U^l|^2
///   energy      (k sum_l |A^{1/2}U^l|^2)^{p/2}
///   pressure    (k sum_l |grad Pi^l|^2)^{p/2}
std::vector<double> fem_functionals(const FemTrajectory& traj, const FemSystem& sys, double p,
                                    double nu);
std::vector<std::string> fem_functional_names();

/// Column-wise Monte Carlo means of per-replicate functional vectors.
std::vector<NamedEstimate> moment_estimates(const std::vector<std::vector<double>>& per_replicate,
                                            const std::vector<std::string>& names);

// ---------------------------------------------------------------- exp-moments

struct ExpMomentEstimate {
  double alpha = 0.0;
  double log_mean = 0.0;      // log of the mean of exp(alpha X)
  double mean = 0.0;          // exp(log_mean), inf when it overflows
  double log_half_width = 0.0;  // delta-method 95% half-width of log_mean
  double largest_share = 0.0;   // max term / sum of terms
  bool unstable = false;        // largest_share > 0.5
  int count = 0;
};

/// log-sum-exp form of the sample mean of exp(alpha X).
ExpMomentEstimate exp_moment_estimate(std::span<const double> values, double alpha);

/// max_l |A^{1/2}u^l|^2 and max_n [|A^{1/2}u^n|^2 + nu k sum_{l<=n} |A u^l|^2].
double sup_v_functional(const Trajectory& traj);
double sup_v_dissipation_functional(const Trajectory& traj);

// ---------------------------------------------------------------- regularity

/// L2 mode: E|u(t + tau) - u(t)|^2 averaged over t on the trajectory grid,
/// for tau = 2^j k, j = 0 .. levels - 1. Rows carry tau as the scale.
RateReport time_regularity_l2(const std::vector<Trajectory>& trajs, int levels);

/// V mode: sum_j int_{t_{j-1}}^{t_j} |u(s) - u(t_{j-1})|_V^2 + |u(s) - u(t_j)|_V^2 ds
/// on coarse grids N_c = N / 2^j, the integral taken as a Riemann sum over
/// the fine trajectory. Rows carry T / N_c as the scale.
RateReport time_regularity_v(const std::vector<Trajectory>& trajs, int levels);

// ---------------------------------------------------------------- constants

struct ConstantEstimate {
  double cbar = 0.0;   // sup |u|_{L4}^2 / (|u| |A^{1/2}u|)
  double sigma = 0.0;  // sup |u|_{Linf} / |A u|
  int samples = 0;
  /// Running maxima after each random sample (before local search).
  std::vector<double> cbar_history;
  std::vector<double> sigma_history;
};

/// Ratios of one field on the dealiased grid.
double cbar_ratio(const SpectralField& u);
double sigma_ratio(const SpectralField& u);

/// Random fields with random spectral slopes, then coordinate hill climbing
/// from the best sample of each ratio. Results are lower bounds.
ConstantEstimate estimate_constants(GridPtr grid, int samples, std::uint64_t seed,
                                    int climb_iterations = 200);

// ---------------------------------------------------------------- conditions

struct ConditionInputs {
  double nu = 1.0;
  double horizon = 1.0;
  double trace_q = 0.0;
  double k0 = 0.0;
  double cbar = 0.0;
  double sigma = 0.0;
  /// Absent for deterministic u0: every gamma0 condition then holds.
  std::optional<double> gamma0;
  double mu = 0.5;
};

struct ConditionRow {
  std::string theorem;
  std::string quantity;  // "Tr(Q)" or "gamma0"
  double threshold = 0.0;
  double value = 0.0;
  double margin = 0.0;  // threshold - value for Tr(Q), value - threshold for gamma0
  bool pass = false;
};

struct ConditionReport {
  ConditionInputs inputs;
  double alpha0 = 0.0;  // nu / Tr(Q), +inf when Tr(Q) = 0
  double beta0 = 0.0;   // alpha0 gamma0 / (gamma0 + alpha0)
  double beta1 = 0.0;   // alpha0 gamma0 / (2 gamma0 + alpha0)
  std::vector<ConditionRow> rows;

  /// Conjunction of the rows whose theorem starts with `theorem`.
  bool passes(const std::string& theorem) const;
};

double threshold_implicit_rate(double nu, double T, double cbar);
double threshold_fem_rate(double nu, double T, double cbar, double sigma);
double threshold_divfree_rate(double nu, double T, double cbar);

ConditionReport check_conditions(const ConditionInputs& in);

}  // namespace snse
