#include "cctmpc/simulator.hpp"

#include <cmath>

namespace cctmpc {

UncertaintySample sample_uncertainty(const UncertainSystem& sys, DisturbanceMode dmode,
                                     ModelMode mmode, CounterRng& rng) {
  UncertaintySample out;
  const int nw = sys.disturbance_dim();
  auto box = sys.W.box_bounds(nw);
  if (!box || !box->first.allFinite() || !box->second.allFinite())
    throw CctmpcError("uncertainty sampling requires a box-shaped disturbance set");
  out.w.resize(nw);
  for (int i = 0; i < nw; ++i) {
    if (dmode == DisturbanceMode::BoxUniform) {
      out.w[i] = rng.uniform(box->first[i], box->second[i]);
    } else {
      out.w[i] = rng.next_double() < 0.5 ? box->first[i] : box->second[i];
    }
  }

  const int l = sys.num_models();
  out.model_weights.setZero(l);
  if (l == 1 || mmode == ModelMode::FixedVertex) {
    int j = l == 1 ? 0 : static_cast<int>(rng.next_below(l));
    out.model_weights[j] = 1.0;
    out.A = sys.A_vertices[j];
    out.B = sys.B_vertices[j];
  } else {
    // Dirichlet(1,..,1) via normalized exponentials
    double total = 0.0;
    for (int j = 0; j < l; ++j) {
      double e = -std::log(1.0 - rng.next_double());
      out.model_weights[j] = e;
      total += e;
    }
    out.model_weights /= total;
    out.A = Eigen::MatrixXd::Zero(sys.state_dim(), sys.state_dim());
    out.B = Eigen::MatrixXd::Zero(sys.state_dim(), sys.input_dim());
    for (int j = 0; j < l; ++j) {
      out.A += out.model_weights[j] * sys.A_vertices[j];
      out.B += out.model_weights[j] * sys.B_vertices[j];
    }
  }
  return out;
}

std::vector<StepLog> run_closed_loop(CctmpcController& controller, const UncertainSystem& sys,
                                     const ScenarioConfig& config) {
  if (config.steps < 1) throw CctmpcError("scenario needs at least one step");
  CounterRng rng(config.seed);
  Eigen::VectorXd x = config.x0;
  std::vector<StepLog> logs;
  logs.reserve(config.steps);
  for (int k = 0; k < config.steps; ++k) {
    TubeSolution sol;
    try {
      sol = controller.mpc_step(x);
    } catch (const InfeasibleStateError& err) {
      if (k == 0) throw;
      throw RecursiveFeasibilityViolation("closed loop infeasible at step " + std::to_string(k) +
                                          ": " + err.what());
    }
    FeedbackResult fb = controller.vertex_feedback(x, sol);
    UncertaintySample sample =
        sample_uncertainty(sys, config.disturbance_mode, config.model_mode, rng);

    StepLog log;
    log.k = k;
    log.x = x;
    log.u = fb.input;
    log.w = sample.w;
    log.model_weights = sample.model_weights;
    log.y0 = sol.y.front();
    log.lyapunov = controller.lyapunov_value(sol.y);
    log.feasible = true;
    log.residual = (controller.block().tmpl().Y * x - sol.y.front()).maxCoeff();
    logs.push_back(std::move(log));

    x = sample.A * x + sample.B * fb.input + sys.C * sample.w;
  }
  return logs;
}

}  // namespace cctmpc
