#pragma once

// Time discretizations of the projected stochastic Navier-Stokes equation
//   du + [nu A u + P (u . grad) u] dt = dW
// on the divergence-free spectral truncation.

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snse/noise.hpp"
#include "snse/spectral.hpp"

namespace snse {

enum class SchemeKind { FullyImplicit, SemiImplicit, OuExact };

std::string_view to_string(SchemeKind kind);
SchemeKind scheme_kind_from_string(std::string_view name);

struct SchemeParams {
  double viscosity = 1.0;
  double horizon = 1.0;
  int steps = 1;
  double tol_fp = 1e-10;
  int max_iter = 100;
  SchemeKind kind = SchemeKind::FullyImplicit;
  /// false drops the convection term (the Ornstein-Uhlenbeck problem).
  bool advection = true;

  double step_size() const { return horizon / steps; }
  /// Throws std::invalid_argument on nu <= 0, T <= 0, N < 1, tol <= 0.
  void validate() const;
};

/// Raised when the fixed-point iteration of a step does not reach tol_fp.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, int step, int iterations, double residual)
      : std::runtime_error(what), step_(step), iterations_(iterations), residual_(residual) {}

  int step() const { return step_; }
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

private:
  int step_;
  int iterations_;
  double residual_;
};

struct StepResult {
  SpectralField state;
  int iterations = 0;
  /// V-norm of the last fixed-point update.
  double last_update = 0.0;
};

struct StepDiagnostics {
  int iterations = 0;
  /// |u^l|^2 - |u^{l-1}|^2 + |u^l - u^{l-1}|^2 + 2 k nu |A^{1/2} u^l|^2 - 2 (dW, u^l)
  double energy_residual = 0.0;
  /// |A^{1/2} u^l|^2
  double v_norm_sq = 0.0;
  /// k nu sum_{i <= l} |A u^i|^2
  double dissipation_sum = 0.0;
};

struct Trajectory {
  SchemeParams params;
  std::vector<SpectralField> states;        // u^0 .. u^N
  std::vector<StepDiagnostics> diagnostics; // steps 1 .. N
  std::uint64_t seed = 0;
};

/// Solves (I + k nu A) u + k P B(u, u) = u_prev + dW by damped Picard
/// iteration in the V norm.
StepResult implicit_step(const SpectralField& u_prev, const SpectralField& dW,
                         const SchemeParams& p);

/// Oseen step: the convecting velocity is u_prev, so the system is linear.
StepResult semi_implicit_step(const SpectralField& u_prev, const SpectralField& dW,
                              const SchemeParams& p);

/// Left-hand side of the per-step energy identity minus its right-hand side.
double energy_residual(const SpectralField& u_prev, const SpectralField& u,
                       const SpectralField& dW, const SchemeParams& p);

/// Runs the scheme selected by p.kind with dW = increment_field(path, l, N).
/// Step failures surface as SolverError carrying the step index.
Trajectory run_scheme(const SpectralField& u0, const NoisePath& path, const SchemeParams& p);

/// Exact Ornstein-Uhlenbeck solution (B = 0) on the fine grid of `path`,
/// subsampled to p.steps. The stochastic convolution of each fine step is
/// drawn from its exact joint law with the path's Brownian increment.
Trajectory ou_exact_trajectory(const SpectralField& u0, const NoisePath& path,
                               const SchemeParams& p);

}  // namespace snse
