#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cctmpc/geometry.hpp"
#include "cctmpc/solver.hpp"

namespace cctmpc {

/// Half-space representation {x : H x <= h}. An empty row set means the
/// whole space (used for unconstrained states).
struct HPolytope {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;

  int num_rows() const { return static_cast<int>(H.rows()); }
  bool unconstrained() const { return H.rows() == 0; }
  bool contains(const Eigen::VectorXd& x, double tol = 1e-9) const {
    return H.rows() == 0 || ((H * x - h).maxCoeff() <= tol);
  }

  /// If every row constrains a single coordinate, returns the tightest
  /// per-coordinate interval bounds [lo, hi]. Coordinates without a finite
  /// bound get +-inf.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> box_bounds(int dim) const;

  static HPolytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);
  static HPolytope unbounded(int dim) { return HPolytope{Eigen::MatrixXd(0, dim), Eigen::VectorXd(0)}; }
};

class UnboundedDisturbanceError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// Linear discrete-time system x+ = A x + B u + C w with the model pair
/// [A, B] ranging over the convex hull of given vertices and w over a
/// compact polytope W. Constant models are the l = 1 case.
struct UncertainSystem {
  std::vector<Eigen::MatrixXd> A_vertices;
  std::vector<Eigen::MatrixXd> B_vertices;
  Eigen::MatrixXd C;
  HPolytope W;
  HPolytope X;
  HPolytope U;

  int num_models() const { return static_cast<int>(A_vertices.size()); }
  int state_dim() const { return static_cast<int>(C.rows()); }
  int input_dim() const { return A_vertices.empty() ? 0 : static_cast<int>(B_vertices[0].cols()); }
  int disturbance_dim() const { return static_cast<int>(C.cols()); }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> issues;
};

/// Dimension and boundedness checks; collects all violations instead of
/// throwing on the first one.
ValidationReport validate_system(const UncertainSystem& sys, const SolverSettings& settings = {});

/// Tight template enclosure of C*W: w_bar_i = max_{w in W} Y_i C w.
struct DisturbanceSupport {
  Eigen::VectorXd w_bar;
};

enum class SupportMethod { Auto, ClosedFormBox, LinearProgram };

/// One support value per template row. Box-shaped W uses the closed form
/// |Y_i C| * halfwidth + (Y_i C) * center; anything else goes through LPs.
/// Throws UnboundedDisturbanceError when W is unbounded in a needed
/// direction.
DisturbanceSupport disturbance_support(const TemplatePolytope& t, const UncertainSystem& sys,
                                       SupportMethod method = SupportMethod::Auto,
                                       const SolverSettings& settings = {});

}  // namespace cctmpc
