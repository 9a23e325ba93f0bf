#pragma once

// Periodic Taylor-Hood (P2 velocity / P1 pressure) finite elements on the
// diagonally split uniform mesh of the torus [0, L]^2.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>
#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "snse/noise.hpp"
#include "snse/quadrature.hpp"
#include "snse/spectral.hpp"
#include "snse/time_scheme.hpp"

namespace snse {

using SparseMatrix = Eigen::SparseMatrix<double>;
using VectorField = std::function<std::array<double, 2>(double, double)>;
using ScalarField = std::function<double(double, double)>;
/// Gradient rows (d_x u, d_y u) and (d_x v, d_y v).
using VectorGradient = std::function<std::array<double, 4>(double, double)>;

struct MeshTriangle {
  int type = 0;  // 0: (i,j),(i+1,j),(i+1,j+1)   1: (i,j),(i+1,j+1),(i,j+1)
  int i = 0, j = 0;
  std::array<int, 3> vertices{};  // pressure dofs
  std::array<int, 6> nodes{};     // scalar P2 dofs: vertices, then edges 01, 12, 20
};

/// n x n squares, each cut along its rising diagonal, with periodic vertex
/// identification. All 2 n^2 triangles are congruent.
class PeriodicMesh {
public:
  /// Throws std::invalid_argument for n < 2 or L <= 0.
  PeriodicMesh(double length, int subdivisions);

  double length() const { return length_; }
  int subdivisions() const { return n_; }
  double spacing() const { return length_ / n_; }
  /// Maximal triangle diameter L sqrt(2) / n.
  double h() const;

  int vertex_count() const { return n_ * n_; }
  int edge_count() const;
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  int euler_characteristic() const { return vertex_count() - edge_count() + triangle_count(); }

  const std::vector<MeshTriangle>& triangles() const { return triangles_; }

  /// P2 nodes form the (2n) x (2n) lattice of spacing L / (2n); node (a, b)
  /// has index a * 2n + b and sits at (a L / 2n, b L / 2n).
  int node_index(int a, int b) const;
  int vertex_index(int i, int j) const;

private:
  double length_;
  int n_;
  std::vector<MeshTriangle> triangles_;
};

struct FemField {
  Eigen::VectorXd coeffs;  // [x block | y block] over scalar P2 nodes
};

struct FemPressure {
  Eigen::VectorXd coeffs;  // P1 vertex values
};

/// Assembled Taylor-Hood operators. Velocity vectors are laid out as
/// [x components | y components] over the scalar P2 nodes.
class FemSystem {
public:
  explicit FemSystem(const PeriodicMesh& mesh);

  const PeriodicMesh& mesh() const { return mesh_; }
  int scalar_dofs() const { return scalar_dofs_; }
  int velocity_dofs() const { return 2 * scalar_dofs_; }
  int pressure_dofs() const { return pressure_dofs_; }
  const TriangleRule& rule() const { return rule_; }

  const SparseMatrix& mass() const { return mass_; }
  const SparseMatrix& stiffness() const { return stiffness_; }
  /// Rows: pressure dofs; (div Phi, Lambda).
  const SparseMatrix& divergence() const { return divergence_; }
  const SparseMatrix& pressure_mass() const { return pressure_mass_; }
  const SparseMatrix& pressure_stiffness() const { return pressure_stiffness_; }
  const SparseMatrix& scalar_mass() const { return scalar_mass_; }
  const SparseMatrix& scalar_stiffness() const { return scalar_stiffness_; }

  /// Integral of each basis function of velocity component `component`
  /// (a vector in velocity layout), resp. of each pressure basis function.
  const Eigen::VectorXd& velocity_mean(int component) const { return velocity_mean_[component]; }
  const Eigen::VectorXd& pressure_mean() const { return pressure_mean_; }

  /// Scalar block of N(U)_{ij} = ([U . grad] phi_j, phi_i) + 1/2 ([div U] phi_j, phi_i);
  /// the velocity operator is diag(N, N). Same pattern as scalar_mass().
  SparseMatrix convection(const FemField& convecting) const;

  /// (f, Phi_i) by quadrature.
  Eigen::VectorXd load(const SpectralField& f) const;
  Eigen::VectorXd load(const VectorField& f) const;
  Eigen::VectorXd pressure_load(const ScalarField& f) const;

  /// M^{-1} v: the L^2(H_h) representative of a load vector.
  Eigen::VectorXd solve_mass(const Eigen::VectorXd& load) const;

  double l2_norm(const FemField& u) const;
  /// |A^{1/2} u| = |grad u|_{L^2}
  double h1_seminorm(const FemField& u) const;
  double l2_norm(const FemPressure& p) const;
  double gradient_norm(const FemPressure& p) const;

  /// max_a |(div u, psi_a)| / (|grad u|_{L^2} max_a |psi_a|_{L^2}); at most
  /// sqrt(2), and zero exactly on the discretely divergence-free fields.
  double divergence_residual(const FemField& u) const;

  /// Errors against closed-form fields on a degree-10 rule.
  double l2_error(const FemField& u, const VectorField& exact) const;
  double h1_error(const FemField& u, const VectorGradient& exact_gradient) const;
  double l2_error(const FemPressure& p, const ScalarField& exact) const;

private:
  PeriodicMesh mesh_;
  int scalar_dofs_;
  int pressure_dofs_;
  TriangleRule rule_;
  TriangleRule fine_rule_;
  struct ElementType {
    std::array<std::array<double, 2>, 2> jacobian{};  // [row][col], columns v1 - v0, v2 - v0
    std::array<std::array<double, 2>, 2> inverse_transpose{};
    double det = 0.0;
  };
  std::array<ElementType, 2> types_;

  SparseMatrix scalar_mass_, scalar_stiffness_;
  SparseMatrix mass_, stiffness_, divergence_, pressure_mass_, pressure_stiffness_;
  std::array<Eigen::VectorXd, 2> velocity_mean_;
  Eigen::VectorXd pressure_mean_;
  std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> scalar_mass_solver_;
  std::vector<int> element_slots_;  // per triangle: 36 value slots in the scalar pattern
  struct Cache;
  std::shared_ptr<Cache> cache_;  // lazily factored projection solvers

  friend FemField project_qh0_from_load(const FemSystem&, const Eigen::VectorXd&);
  friend FemPressure project_ph0(const FemSystem&, const ScalarField&);

  std::array<double, 2> position(const MeshTriangle& t, const std::array<double, 2>& ref) const;
  std::array<std::array<double, 2>, 6> gradients(int type, const std::array<double, 2>& ref) const;
  SparseMatrix scatter(const std::vector<std::array<double, 36>>& local) const;
  void assemble();
};

/// Reference P2 basis values and gradients.
std::array<double, 6> p2_values(double xi, double eta);
std::array<std::array<double, 2>, 6> p2_gradients(double xi, double eta);

struct SaddleSolution {
  Eigen::VectorXd velocity;
  Eigen::VectorXd pressure;
  /// |r|_inf / |rhs|_inf of the full system.
  double residual = 0.0;
};

/// Solver for the Taylor-Hood saddle-point system
///   [ K    -B^T  C ] [U]   [F]   K = diag(K_s, K_s): velocity block,
///   [ -B    0    0 ] [P] = [0]   B: divergence,
///   [ C^T   0    0 ] [mu]  [0]   C: integrals of the two velocity components.
/// The sparse core [K -B^T; -B 0] is factored by UMFPACK with one pressure
/// dof pinned (the pressure is then shifted to mean zero); the two velocity
/// multipliers are eliminated through their 2 x 2 Schur complement. The
/// sparsity pattern is analyzed once and reused.
class SaddlePointSolver {
public:
  explicit SaddlePointSolver(const FemSystem& sys);

  /// K_s must have the scalar P2 pattern of sys (any matrix obtained by
  /// adding mass, stiffness and convection does). Throws std::runtime_error
  /// if the factorization fails.
  void factorize(const SparseMatrix& scalar_block);
  SaddleSolution solve(const Eigen::VectorXd& load) const;

  int size() const { return static_cast<int>(matrix_.rows()); }

private:
  int scalar_dofs_;
  int pressure_dofs_;
  SparseMatrix matrix_;
  std::vector<int> slot_x_, slot_y_;  // scalar pattern entry -> value slot
  Eigen::MatrixXd border_, border_solved_;
  Eigen::Matrix2d schur_;
  Eigen::VectorXd pressure_weights_;
  Eigen::UmfPackLU<SparseMatrix> lu_;
  bool analyzed_ = false;
  bool factorized_ = false;
};

PeriodicMesh build_mesh(double length, int subdivisions);
FemSystem build_system(const PeriodicMesh& mesh);

struct InfSupResult {
  double beta = 0.0;
  FemPressure pressure;      // eigen-pressure of the smallest nonzero eigenvalue
  FemField maximizer;        // S^{-1} B^T p
  double attained_ratio = 0.0;  // (div maximizer, p) / (|grad maximizer| |p|)
};

/// sqrt of the smallest nonzero eigenvalue of B S^{-1} B^T p = beta^2 M_p p.
InfSupResult infsup_constant(const FemSystem& sys);

/// Eigenvalue of the scalar P2 Laplacian closest to `target`.
double laplacian_eigenvalue_near(const FemSystem& sys, double target);

/// L^2 projection onto the discretely divergence-free, mean-zero subspace.
FemField project_qh0(const FemSystem& sys, const FemField& z);
FemField project_qh0(const FemSystem& sys, const SpectralField& z);
FemField project_qh0(const FemSystem& sys, const VectorField& z);
FemField project_qh0_from_load(const FemSystem& sys, const Eigen::VectorXd& load);

/// L^2 projection onto the mean-zero P1 pressure space.
FemPressure project_ph0(const FemSystem& sys, const ScalarField& z);

/// Nodal interpolation of the truncated Fourier series.
FemField interp_from_spectral(const SpectralField& f, const FemSystem& sys);

struct FemStep {
  FemField velocity;
  FemPressure pressure;
  double solver_residual = 0.0;
};

/// One step of the linearized Taylor-Hood scheme: solves
///   (U - U_prev, Phi) + k nu (grad U, grad Phi) + k btilde(U_prev, U, Phi)
///     - k (Pi, div Phi) = (dW, Phi),   (div U, Lambda) = 0.
/// dW is the L^2(H_h) representative of the noise increment.
FemStep algorithm1_step(const FemSystem& sys, SaddlePointSolver& solver, const FemField& u_prev,
                        const FemField& dW, double k, double nu);

/// Discrete energy identity residual of one step.
double fem_energy_residual(const FemSystem& sys, const FemField& u_prev, const FemField& u,
                           const FemField& dW, double k, double nu);

/// Diagnostics follow time_scheme, except that dissipation_sum accumulates
/// k nu |A^{1/2} U^l|^2 (no discrete A is formed).
struct FemTrajectory {
  std::vector<FemField> velocities;   // U^0 .. U^N
  std::vector<FemPressure> pressures;  // Pi^1 .. Pi^N
  std::vector<StepDiagnostics> diagnostics;
  double step = 0.0;
};

/// Full Taylor-Hood scheme driven by increment_field(path, l, N) projected onto H_h.
/// Linear-solver failures surface as SolverError with the step index.
FemTrajectory run_full_scheme(const FemField& u0, const NoisePath& path, const FemSystem& sys,
                              int steps, double nu);

}  // namespace snse
