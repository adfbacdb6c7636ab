#pragma once

#include <cstdint>
#include <vector>

#include "cctmpc/controller.hpp"
#include "cctmpc/rng.hpp"
#include "cctmpc/system.hpp"

namespace cctmpc {

class RecursiveFeasibilityViolation : public CctmpcError {
 public:
  using CctmpcError::CctmpcError;
};

enum class DisturbanceMode { BoxUniform, VertexExtreme };
enum class ModelMode { FixedVertex, DirichletMix };

struct ScenarioConfig {
  std::uint64_t seed = 0;
  int steps = 1;
  Eigen::VectorXd x0;
  DisturbanceMode disturbance_mode = DisturbanceMode::BoxUniform;
  ModelMode model_mode = ModelMode::DirichletMix;
};

struct StepLog {
  int k = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd w;
  Eigen::VectorXd model_weights;
  Eigen::VectorXd y0;  // first tube parameter of the step solution
  double lyapunov = 0.0;
  bool feasible = false;
  double residual = 0.0;  // max(Y x - y_0*)
};

struct UncertaintySample {
  Eigen::VectorXd w;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd model_weights;
};

/// One admissible uncertainty realization. Disturbance sampling needs a
/// box-shaped W; model sampling draws either a random vertex of the model
/// polytope or a Dirichlet(1,..,1) mixture. Reproducible from the generator
/// state alone.
UncertaintySample sample_uncertainty(const UncertainSystem& sys, DisturbanceMode dmode,
                                     ModelMode mmode, CounterRng& rng);

/// Seeded closed-loop run x+ = A x + B mu(x) + C w under the vertex control
/// law. Any mid-run infeasibility is an error (it would falsify the
/// recursive feasibility guarantee), never a silent recovery.
std::vector<StepLog> run_closed_loop(CctmpcController& controller, const UncertainSystem& sys,
                                     const ScenarioConfig& config);

}  // namespace cctmpc
