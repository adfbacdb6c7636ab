#pragma once

#include <Eigen/Dense>

#include "cctmpc/geometry.hpp"
#include "cctmpc/solver.hpp"

namespace cctmpc {

class NotPositiveDefiniteError : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

/// Strictly convex quadratic stage cost over (y, u), stored as
/// ell(y, u) = y' Wy y + u' Wu u with u the stacked vertex inputs.
struct StageCost {
  Eigen::MatrixXd Wy;  // m x m
  Eigen::MatrixXd Wu;  // (mbar*nu) x (mbar*nu)

  double evaluate(const Eigen::VectorXd& y, const Eigen::VectorXd& u) const {
    return y.dot(Wy * y) + (u.size() ? u.dot(Wu * u) : 0.0);
  }

  /// Stacked gradient (d/dy; d/du).
  Eigen::VectorXd gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& u) const {
    Eigen::VectorXd g(y.size() + u.size());
    g.head(y.size()) = 2.0 * Wy * y;
    if (u.size()) g.tail(u.size()) = 2.0 * Wu * u;
    return g;
  }

  /// Vertex-averaging cost
  ///   || Vbar y ||_Q^2 + || Ubar u ||_R^2
  ///     + sum_i { || V_i y - Vbar y ||_S^2 + || u_i - Ubar u ||_T^2 }
  /// materialized as an explicit PSD quadratic form. All weights must be
  /// positive definite.
  static StageCost vertex_form(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                               const Eigen::MatrixXd& S, const Eigen::MatrixXd& T,
                               const VertexConfiguration& vc);

  /// Pure parameter-space cost ell(y, u) = y' P y with no input weight.
  static StageCost parameter_form(const Eigen::MatrixXd& P, int input_block_size);
};

}  // namespace cctmpc
