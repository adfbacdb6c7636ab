#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace cctmpc {

using SpMat = Eigen::SparseMatrix<double>;

/// Base class for all errors thrown by this library.
class CctmpcError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string to_string(SolveStatus status);

struct SolverSettings {
  double feas_tol = 1e-8;
  double stat_tol = 1e-8;
  double comp_tol = 1e-8;
  int max_iter = 200;
  /// Initial-point hint. Accepted for API compatibility with warm-starting
  /// callers; the reference backend does not use it.
  std::optional<Eigen::VectorXd> primal_hint;
};

/// Linear program
///
///   min  c'z   s.t.  G z <= h,  A z = b,  lb <= z <= ub.
///
/// The bound vectors are optional (size 0 means absent); +-inf entries mark
/// unbounded coordinates. Bounds are folded into the inequality block by the
/// solver; their duals are appended to `mu` after the G-rows, finite upper
/// bounds first (ascending variable index), then finite lower bounds.
struct LinearProgram {
  Eigen::VectorXd c;
  SpMat G;
  Eigen::VectorXd h;
  SpMat A;
  Eigen::VectorXd b;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int num_vars() const { return static_cast<int>(c.size()); }
  /// Throws std::invalid_argument on dimension mismatch or non-finite data.
  void validate() const;
};

/// Convex quadratic program
///
///   min  1/2 z'H z + c'z   s.t.  G z <= h,  A z = b,  lb <= z <= ub,
///
/// with H symmetric positive semidefinite.
struct QuadraticProgram {
  SpMat H;
  Eigen::VectorXd c;
  SpMat G;
  Eigen::VectorXd h;
  SpMat A;
  Eigen::VectorXd b;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  int num_vars() const { return static_cast<int>(c.size()); }
  void validate() const;
  /// Symmetry of H within 1e-10 and PSD within -1e-8*||H||. Dense
  /// eigendecomposition; meant for tests and offline checks, not hot paths.
  void validate_cost_matrix() const;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd z;   // primal
  Eigen::VectorXd mu;  // inequality duals, >= 0 at optimality
  Eigen::VectorXd nu;  // equality duals
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  /// On Infeasible/Unbounded: a Farkas-type certificate was extracted.
  bool has_certificate = false;

  bool optimal() const { return status == SolveStatus::Optimal; }
};

/// Adapter seam for plugging in an external LP/QP solver. All modules route
/// their subproblems through this interface.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual SolveResult solve(const LinearProgram& lp, const SolverSettings& settings) const = 0;
  virtual SolveResult solve(const QuadraticProgram& qp, const SolverSettings& settings) const = 0;
};

/// Self-contained dense/sparse interior-point backend.
///
/// LPs are solved with a homogeneous self-dual embedding, which yields clean
/// Infeasible/Unbounded certificates. QPs use an infeasible-start Mehrotra
/// predictor-corrector method; on non-convergence the constraint system is
/// classified through a phase-1 LP so that infeasibility is never confused
/// with numerical failure. Problem data is immutable during a solve and the
/// backend keeps no state between calls, so distinct solves may run
/// concurrently.
class ReferenceSolver final : public SolverBackend {
 public:
  SolveResult solve(const LinearProgram& lp, const SolverSettings& settings) const override;
  SolveResult solve(const QuadraticProgram& qp, const SolverSettings& settings) const override;
};

SolveResult solve_lp(const LinearProgram& lp, const SolverSettings& settings = {});
SolveResult solve_qp(const QuadraticProgram& qp, const SolverSettings& settings = {});

/// Lawson-Hanson nonnegative least squares with optional free columns:
/// min || M x + F y - g ||_2 over x >= 0 and free y. Deterministic, finitely
/// terminating; returns false when the inner loop fails to make progress.
/// Shared by the solver's dual recovery and by geometric redundancy tests.
bool nonnegative_least_squares(const Eigen::MatrixXd& M, const Eigen::MatrixXd& F,
                               const Eigen::VectorXd& g, Eigen::VectorXd& x, Eigen::VectorXd& y,
                               int max_iter = 400);

}  // namespace cctmpc
