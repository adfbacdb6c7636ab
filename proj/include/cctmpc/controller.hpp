#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cctmpc/stage_cost.hpp"
#include "cctmpc/synthesis.hpp"

namespace cctmpc {

class InfeasibleStateError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

class InterpolationInfeasibleError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// Optimized tube: parameter sequence, stacked vertex inputs per stage, and
/// the terminal epigraph variables.
struct TubeSolution {
  std::vector<Eigen::VectorXd> y;  // N+1 parameters, each R^m
  std::vector<Eigen::VectorXd> u;  // N blocks, each R^{mbar*nu}
  Eigen::VectorXd u_terminal;      // auxiliary inputs of the terminal cost
  double alpha = 0.0;
  double objective = 0.0;  // full objective including constant terms

  int horizon() const { return static_cast<int>(u.size()); }
};

struct FeedbackResult {
  Eigen::VectorXd theta;  // simplex weights over the first-step vertices
  Eigen::VectorXd input;  // applied control
};

/// Row bookkeeping of the assembled QP, exposed for tests.
struct MpcRowLayout {
  int stage_tube_rows = 0;  // m * mbar * l * N
  int stage_cone_rows = 0;  // m_E * N
  int stage_input_rows = 0;
  int stage_state_rows = 0;
  int initial_rows = 0;  // m
  int terminal_rows = 0;
  int total() const {
    return stage_tube_rows + stage_cone_rows + stage_input_rows + stage_state_rows +
           initial_rows + terminal_rows;
  }
};

struct ControllerConfig {
  int horizon = 10;
  SolverSettings solver;
};

/// Online tube controller: one convex QP per step over the tube parameters
/// y_0..y_N, vertex inputs u_0..u_{N-1} and the terminal epigraph pair
/// (alpha, u_hat). The terminal cost enters through its epigraph expansion,
/// so a step is a single QP solve.
class CctmpcController {
 public:
  CctmpcController(const FMembershipBlock& block, const StageCost& cost,
                   const SynthesisData& synth, ControllerConfig config);

  /// Assembles the step QP for measurement x. The objective omits the
  /// constant terms; objective_constant() carries them.
  QuadraticProgram assemble_qp(const Eigen::VectorXd& x) const;
  double objective_constant() const;
  MpcRowLayout row_layout() const;
  int num_variables() const;

  /// Solves the step QP. Throws InfeasibleStateError when x lies outside the
  /// controller's feasible domain.
  TubeSolution mpc_step(const Eigen::VectorXd& x);

  /// Minimum-norm convex interpolation of the first-stage vertex inputs:
  /// theta >= 0, sum theta = 1, sum theta_i V_i y_0 = x. Requires
  /// Y x <= y_0 + tol.
  FeedbackResult vertex_feedback(const Eigen::VectorXd& x, const TubeSolution& sol) const;

  /// Terminal cost M(y): QP over (alpha, u_hat); +inf outside the terminal
  /// domain. M(y_s) = 0.
  double terminal_cost(const Eigen::VectorXd& y) const;

  /// Rotated cost-to-travel R(y, y+) = V(y, y+) + lambda'(y - y+) - V_s;
  /// +inf when the transition is infeasible.
  double rotated_cost(const Eigen::VectorXd& y, const Eigen::VectorXd& yplus) const;

  /// Tube-space Lyapunov function: sum of R over the links plus M at the end.
  double lyapunov_value(const std::vector<Eigen::VectorXd>& y_seq) const;

  /// One-step descent value min over y+ of R(y, y+) + M(y+), realized as a
  /// single QP over (y+, u, alpha', u_hat'). Infinite when y has no feasible
  /// successor.
  double descent_value(const Eigen::VectorXd& y) const;

  /// Shifted candidate for the next step: drops the first stage, extends the
  /// end with y_N+ = y_s + alpha*(sigma - y_s) certified by the previous
  /// terminal inputs, and re-centers the epigraph at gamma*alpha. Feasible
  /// for every admissible successor state by construction.
  TubeSolution shifted_warm_start(const TubeSolution& sol) const;

  /// Objective value of an arbitrary candidate (used to compare warm starts
  /// against re-optimized solutions).
  double objective_value(const TubeSolution& sol) const;

  const SynthesisData& synthesis() const { return synth_; }
  const FMembershipBlock& block() const { return *block_; }
  const StageCost& cost() const { return *cost_; }
  const ControllerConfig& config() const { return config_; }

 private:
  const FMembershipBlock* block_;
  const StageCost* cost_;
  SynthesisData synth_;
  ControllerConfig config_;
  double alpha_cost_coef_ = 0.0;  // rho/(1-gamma) - lambda'(sigma - y_s)
  std::optional<Eigen::VectorXd> warm_start_;

  int offset_y(int k) const;
  int offset_u(int k) const;
  int offset_u_terminal() const;
  int offset_alpha() const;
};

}  // namespace cctmpc
