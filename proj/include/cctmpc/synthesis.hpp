#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cctmpc/geometry.hpp"
#include "cctmpc/stage_cost.hpp"
#include "cctmpc/system.hpp"

namespace cctmpc {

class DegenerateIndexError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

class GammaNotContractiveError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// One-step tube constraint block over variables (y, u_1..u_mbar, y+):
///
///   Y Abar_j V_i y + Y Bbar_j u_i + w_bar <= y+   for all i, j
///   E y <= 0,  E y+ <= 0,  u_i in U,  V_i y in X,
///
/// optionally extended with the successor state rows V_i y+ in X used by the
/// cost-to-travel problem. Feasibility of the block certifies that the pair
/// of tube parameters admits a robustly invariant transition.
class FMembershipBlock {
 public:
  FMembershipBlock(const TemplatePolytope& t, const VertexConfiguration& vc,
                   const UncertainSystem& sys, const Eigen::VectorXd& w_bar);

  int row_count(bool successor_state_rows = false) const;

  /// Appends the block as triplets/rhs entries. The y variables live at
  /// column y_offset (m wide), the stacked inputs at u_offset (mbar*nu wide)
  /// and the successor parameter at yplus_offset.
  void append(std::vector<Eigen::Triplet<double>>& trip, std::vector<double>& rhs, int row_offset,
              int y_offset, int u_offset, int yplus_offset, bool successor_state_rows = false) const;

  const Eigen::MatrixXd& tube_map(int model, int vertex) const { return YAV_[model][vertex]; }
  const Eigen::MatrixXd& input_map(int model) const { return YB_[model]; }
  const Eigen::VectorXd& w_bar() const { return w_bar_; }
  const TemplatePolytope& tmpl() const { return *t_; }
  const VertexConfiguration& config() const { return *vc_; }
  const UncertainSystem& system() const { return *sys_; }

 private:
  const TemplatePolytope* t_;
  const VertexConfiguration* vc_;
  const UncertainSystem* sys_;
  Eigen::VectorXd w_bar_;
  std::vector<std::vector<Eigen::MatrixXd>> YAV_;  // [model][vertex], m x m
  std::vector<Eigen::MatrixXd> YB_;                // [model], m x nu
};

/// LP check that (y, y+) admits certifying vertex inputs, i.e. that the
/// block is feasible at the fixed parameter pair. When `inputs` is non-null
/// the minimum-norm certificate is returned.
bool f_membership_feasible(const FMembershipBlock& block, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& yplus, const SolverSettings& settings = {},
                           Eigen::VectorXd* inputs = nullptr);

struct ContractiveSynthesis {
  bool feasible = false;
  Eigen::VectorXd sigma;    // contractive parameter
  Eigen::VectorXd u;        // stacked certifying vertex inputs
  double beta_used = 0.0;   // contraction factor the certificate holds at;
                            // marginally above the requested one when a
                            // degenerate optimizer had to be perturbed
};

/// Solves the beta-contraction feasibility problem
///
///   Y Abar_j V_i y + Y Bbar_j u_i + w_bar <= beta y,  E y <= 0,
///   u_i in U,  V_i y in X
///
/// with the regularizing objective sum_i ||u_i||^2 + 1e-6 ||y||^2 so the
/// selected point is unique and reproducible. On success the returned sigma
/// has passed the perturbation / entirely-simple re-check against the
/// configuration of the seed; infeasibility is reported, not thrown, since it
/// signals that the template needs more rows.
ContractiveSynthesis synthesize_contractive(const TemplatePolytope& t, const VertexConfiguration& vc,
                                            const UncertainSystem& sys, const Eigen::VectorXd& w_bar,
                                            double beta, const SolverSettings& settings = {});

struct CostToTravel {
  bool feasible = false;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd inputs;  // minimizing vertex inputs
};

/// One-step cost-to-travel: min_u ell(y, u) subject to the membership block
/// from y to y+ including the successor state rows. Infinite when infeasible.
CostToTravel cost_to_travel(const FMembershipBlock& block, const StageCost& cost,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& yplus,
                            const SolverSettings& settings = {});

struct SteadyState {
  Eigen::VectorXd y_s;
  Eigen::VectorXd u_s;     // stacked vertex inputs
  Eigen::VectorXd lambda;  // dual of the equality y = y+
  double V_s = 0.0;
  double duality_gap = 0.0;  // |primal - dual| of the solved program
};

/// Steady tube problem: minimize ell(y, u) over the cost-to-travel
/// constraint set with y = y+ imposed as an equality block. The equality
/// dual lambda follows the Lagrangian convention ell + lambda' (y - y+),
/// which every downstream module assumes. Infeasibility cannot occur once a
/// contractive seed exists and is reported as an internal error.
SteadyState solve_steady(const FMembershipBlock& block, const StageCost& cost,
                         const SolverSettings& settings = {});

/// Contraction constant: the smallest gamma >= 0 with
/// gamma (sigma - y_s) >= beta sigma - y_s, in closed form. Indices with
/// sigma_i == y_s,i must already satisfy the requirement; gamma must come out
/// below one.
double contraction_gamma(const Eigen::VectorXd& sigma, const Eigen::VectorXd& y_s, double beta);

/// Lipschitz bound of the (quadratic) stage cost along the segment between
/// (sigma, u_sigma) and (y_s, u_s): the gradient of a quadratic is affine, so
/// the maximum gradient norm over the segment is attained at an endpoint.
double lipschitz_bound(const StageCost& cost, const Eigen::VectorXd& sigma,
                       const Eigen::VectorXd& u_sigma, const Eigen::VectorXd& y_s,
                       const Eigen::VectorXd& u_s);

/// rho = lbar * ||(sigma - y_s; u_sigma - u_s)||_2 + (1 - gamma) * |lambda'(sigma - y_s)|
double compute_rho(double lbar, const Eigen::VectorXd& sigma, const Eigen::VectorXd& u_sigma,
                   const Eigen::VectorXd& y_s, const Eigen::VectorXd& u_s,
                   const Eigen::VectorXd& lambda, double gamma);

/// Everything the online controller needs, computed offline.
struct SynthesisData {
  Eigen::VectorXd sigma;
  double beta = 0.0;
  Eigen::VectorXd y_s;
  Eigen::VectorXd u_s;
  Eigen::VectorXd lambda;
  double V_s = 0.0;
  Eigen::VectorXd u_sigma;  // minimizer of the cost-to-travel at (sigma, sigma)
  double gamma = 0.0;
  double lipschitz = 0.0;
  double rho = 0.0;
};

struct SynthesisOptions {
  double beta = 0.95;
  SolverSettings solver;
};

/// Full offline pipeline: contraction, steady state, gamma, Lipschitz bound
/// and rho. If the steady parameter fails y_s <= sigma, the contraction
/// problem is re-solved with the anchoring constraint y >= y_s so the seed
/// dominates the steady polytope. Throws CctmpcError when the contraction
/// problem is infeasible.
SynthesisData run_synthesis(const FMembershipBlock& block, const StageCost& cost,
                            const SynthesisOptions& options = {});

}  // namespace cctmpc
