#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cctmpc/controller.hpp"
#include "cctmpc/simulator.hpp"
#include "test_support.hpp"

using namespace cctmpc;
using namespace cctmpc::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct ControllerFixture {
  TemplatePolytope t;
  VertexConfiguration vc;
  UncertainSystem sys;
  VectorXd w_bar;
  StageCost cost;
  SynthesisData synth;
  std::unique_ptr<FMembershipBlock> block;
  std::unique_ptr<CctmpcController> controller;
};

ControllerFixture make_fixture(int m, int horizon) {
  ControllerFixture f;
  auto [t, vc] = regular_template_2d(m);
  f.t = std::move(t);
  f.vc = std::move(vc);
  f.sys = example1_system();
  f.w_bar = disturbance_support(f.t, f.sys).w_bar;
  f.cost = example1_cost(f.vc);
  f.block = std::make_unique<FMembershipBlock>(f.t, f.vc, f.sys, f.w_bar);
  SynthesisOptions options;
  options.beta = 0.95;
  f.synth = run_synthesis(*f.block, f.cost, options);
  ControllerConfig config;
  config.horizon = horizon;
  f.controller = std::make_unique<CctmpcController>(*f.block, f.cost, f.synth, config);
  return f;
}

VectorXd steady_center(const ControllerFixture& f) {
  VectorXd c = VectorXd::Zero(f.t.dim());
  for (const auto& V : f.vc.vertex_maps) c += V * f.synth.y_s;
  return c / f.vc.num_vertices();
}

}  // namespace

TEST_CASE("stage cost form") {
  TemplatePolytope t;
  t.Y.resize(4, 2);
  t.Y << 1, 0, 0, 1, -1, 0, 0, -1;
  t.sigma = VectorXd::Ones(4);
  auto vc = enumerate_vertex_configuration(t);
  StageCost cost = StageCost::vertex_form(MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1),
                                          MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1), vc);

  SUBCASE("zero at the origin") {
    CHECK(cost.evaluate(VectorXd::Zero(4), VectorXd::Zero(4)) == doctest::Approx(0.0));
  }
  SUBCASE("hand value at the seed square") {
    // center is the origin, all four corners at distance sqrt(2)
    CHECK(cost.evaluate(t.sigma, VectorXd::Zero(4)) == doctest::Approx(8.0));
  }
  SUBCASE("Hessian matches finite differences") {
    CounterRng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      VectorXd y = random_vector(rng, 4), u = random_vector(rng, 4);
      VectorXd g = cost.gradient(y, u);
      double h = 1e-6;
      for (int i = 0; i < 4; ++i) {
        VectorXd yp = y, ym = y;
        yp[i] += h;
        ym[i] -= h;
        double fd = (cost.evaluate(yp, u) - cost.evaluate(ym, u)) / (2 * h);
        CHECK(fd == doctest::Approx(g[i]).epsilon(1e-6));
        VectorXd up = u, um = u;
        up[i] += h;
        um[i] -= h;
        fd = (cost.evaluate(y, up) - cost.evaluate(y, um)) / (2 * h);
        CHECK(fd == doctest::Approx(g[4 + i]).epsilon(1e-6));
      }
    }
  }
  SUBCASE("weights must be positive definite") {
    MatrixXd bad = MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(StageCost::vertex_form(bad, MatrixXd::Identity(1, 1),
                                           MatrixXd::Identity(2, 2), MatrixXd::Identity(1, 1), vc),
                    NotPositiveDefiniteError);
  }
}

TEST_CASE("assembled step program has the documented shape") {
  ControllerFixture f = make_fixture(16, 50);
  const int m = 16, mbar = 16, nu = 1, N = 50;
  CHECK(f.controller->num_variables() == (N + 1) * m + N * mbar * nu + mbar * nu + 1);
  MpcRowLayout lay = f.controller->row_layout();
  CHECK(lay.stage_tube_rows == m * mbar * 1 * N);  // 12800
  CHECK(lay.stage_tube_rows == 12800);
  CHECK(lay.initial_rows == m);
  QuadraticProgram qp = f.controller->assemble_qp(VectorXd::Zero(2));
  CHECK(qp.G.rows() == lay.total());
  CHECK(qp.num_vars() == f.controller->num_variables());
}

TEST_CASE("assembled Hessian is positive semidefinite") {
  ControllerFixture f = make_fixture(8, 5);
  QuadraticProgram qp = f.controller->assemble_qp(steady_center(f));
  CHECK_NOTHROW(qp.validate_cost_matrix());
}

TEST_CASE("objective of the steady candidate telescopes to N * V_s") {
  ControllerFixture f = make_fixture(8, 7);
  const int N = 7;
  TubeSolution steady;
  steady.y.assign(N + 1, f.synth.y_s);
  steady.u.assign(N, f.synth.u_s);
  steady.u_terminal = f.synth.u_s;
  steady.alpha = 0.0;
  double value = f.controller->objective_value(steady);
  // direct evaluation: lambda' y_s + N ell(y_s, u_s) - lambda' y_s
  //                    + [ell(y_s, u_s) - V_s] + constants
  double tik = steady.alpha * steady.alpha + (N + 1) * f.synth.y_s.squaredNorm() +
               (N + 1) * f.synth.u_s.squaredNorm();
  double expected = N * f.synth.V_s + 1e-8 * tik;
  CHECK(value == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("step at a steady interior state stays on the steady tube") {
  ControllerFixture f = make_fixture(8, 10);
  VectorXd x = steady_center(f);
  TubeSolution sol = f.controller->mpc_step(x);
  CHECK((f.t.Y * x - sol.y.front()).maxCoeff() <= 1e-7);
  for (const auto& y : sol.y)
    CHECK((y - f.synth.y_s).lpNorm<Eigen::Infinity>() < 1e-3);
  CHECK(sol.objective - 10 * f.synth.V_s < 1e-3);
  CHECK(f.controller->lyapunov_value(sol.y) <= 1e-6);
}

TEST_CASE("far state is rejected as infeasible") {
  ControllerFixture f = make_fixture(8, 10);
  VectorXd x(2);
  x << 500.0, 500.0;
  CHECK_THROWS_AS(f.controller->mpc_step(x), InfeasibleStateError);
}

TEST_CASE("step from the published initial state is feasible and ends near steady") {
  ControllerFixture f = make_fixture(16, 50);
  VectorXd x(2);
  x << 4.0, 8.0;
  TubeSolution sol = f.controller->mpc_step(x);
  CHECK((f.t.Y * x - sol.y.front()).maxCoeff() <= 1e-7);
  // terminal parameter lands on the homothetic segment toward the seed
  VectorXd y_term = f.synth.y_s + sol.alpha * (f.synth.sigma - f.synth.y_s);
  CHECK((sol.y.back() - y_term).lpNorm<Eigen::Infinity>() < 0.5);
  CHECK(sol.alpha >= -1e-9);
  CHECK(sol.alpha <= 1.0 + 1e-9);
}

TEST_CASE("vertex feedback") {
  ControllerFixture f = make_fixture(8, 10);
  VectorXd x = steady_center(f);
  TubeSolution sol = f.controller->mpc_step(x);
  const int mbar = f.vc.num_vertices();

  SUBCASE("interpolation reproduces the state") {
    CounterRng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      VectorXd weights(mbar);
      double total = 0;
      for (int i = 0; i < mbar; ++i) {
        weights[i] = -std::log(1.0 - rng.next_double());
        total += weights[i];
      }
      weights /= total;
      VectorXd probe = VectorXd::Zero(2);
      for (int i = 0; i < mbar; ++i) probe += weights[i] * (f.vc.vertex_maps[i] * sol.y.front());
      FeedbackResult fb = f.controller->vertex_feedback(probe, sol);
      CHECK(fb.theta.minCoeff() >= -1e-9);
      CHECK(fb.theta.sum() == doctest::Approx(1.0).epsilon(1e-7));
      VectorXd rebuilt = VectorXd::Zero(2);
      for (int i = 0; i < mbar; ++i) rebuilt += fb.theta[i] * (f.vc.vertex_maps[i] * sol.y.front());
      CHECK((rebuilt - probe).lpNorm<Eigen::Infinity>() <= 1e-8);
      CHECK(f.sys.U.contains(fb.input, 1e-8));
    }
  }

  SUBCASE("vertex states select the vertex input when the representation is unique") {
    // run from a transient state so the first polytope has distinct vertices
    VectorXd x0(2);
    x0 << 4.0, 8.0;
    ControllerFixture g = make_fixture(8, 12);
    TubeSolution tsol = g.controller->mpc_step(x0);
    auto verts = vertices_of(ConfiguredPolytope{&g.t, &g.vc, tsol.y.front()});
    // pick a vertex that is strictly extreme (not a duplicate)
    for (int j = 0; j < g.vc.num_vertices(); ++j) {
      bool dup = false;
      for (int i = 0; i < g.vc.num_vertices(); ++i)
        if (i != j && (verts[i] - verts[j]).lpNorm<Eigen::Infinity>() < 1e-7) dup = true;
      if (dup) continue;
      FeedbackResult fb = g.controller->vertex_feedback(verts[j], tsol);
      CHECK(std::abs(fb.input[0] - tsol.u.front()[j]) < 1e-5);
      break;
    }
  }

  SUBCASE("center input is no larger than the uniform mixture") {
    VectorXd center = VectorXd::Zero(2);
    for (int i = 0; i < mbar; ++i) center += f.vc.vertex_maps[i] * sol.y.front();
    center /= mbar;
    FeedbackResult fb = f.controller->vertex_feedback(center, sol);
    double uniform_norm = 0.0;
    VectorXd mix = VectorXd::Zero(f.sys.input_dim());
    for (int i = 0; i < mbar; ++i) mix += sol.u.front().segment(i, 1) / mbar;
    uniform_norm = mix.norm();
    CHECK(fb.input.norm() <= uniform_norm + 1e-7);
  }

  SUBCASE("states outside the first polytope are rejected") {
    VectorXd outside(2);
    outside << 100.0, 100.0;
    CHECK_THROWS_AS(f.controller->vertex_feedback(outside, sol), InterpolationInfeasibleError);
  }
}

TEST_CASE("terminal cost function") {
  ControllerFixture f = make_fixture(8, 10);
  SUBCASE("zero exactly at the steady parameter") {
    CHECK(std::abs(f.controller->terminal_cost(f.synth.y_s)) <= 1e-9);
  }
  SUBCASE("seed value matches a dense grid over the segment variable") {
    double m_qp = f.controller->terminal_cost(f.synth.sigma);
    REQUIRE(std::isfinite(m_qp));
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 1000; ++i) {
      double alpha = i / 1000.0;
      VectorXd target = f.synth.y_s + alpha * (f.synth.sigma - f.synth.y_s);
      CostToTravel ct = cost_to_travel(*f.block, f.cost, f.synth.sigma, target);
      if (!ct.feasible) continue;
      double val = ct.value + f.synth.lambda.dot(f.synth.sigma - target) - f.synth.V_s +
                   f.synth.rho * alpha / (1.0 - f.synth.gamma);
      best = std::min(best, val);
    }
    CHECK(m_qp <= best + 1e-6);
    CHECK(m_qp >= best - 1e-3 * (1.0 + std::abs(best)));  // grid resolution gap
  }
  SUBCASE("infinite outside the configuration cone") {
    VectorXd y = f.synth.y_s;
    y[0] = -10.0;
    CHECK(std::isinf(f.controller->terminal_cost(y)));
  }
}

TEST_CASE("tube-space Lyapunov function") {
  ControllerFixture f = make_fixture(8, 10);
  SUBCASE("zero on the steady sequence") {
    std::vector<VectorXd> steady(11, f.synth.y_s);
    CHECK(std::abs(f.controller->lyapunov_value(steady)) <= 1e-7);
  }
  SUBCASE("finite and decreasing along the contraction sequence") {
    auto make_seq = [&](int start) {
      std::vector<VectorXd> seq;
      for (int k = start; k <= start + 10; ++k) {
        double g = std::pow(f.synth.gamma, k);
        seq.push_back(g * f.synth.sigma + (1.0 - g) * f.synth.y_s);
      }
      return seq;
    };
    double l0 = f.controller->lyapunov_value(make_seq(0));
    double l1 = f.controller->lyapunov_value(make_seq(1));
    double l2 = f.controller->lyapunov_value(make_seq(2));
    REQUIRE(std::isfinite(l0));
    CHECK(l1 < l0);
    CHECK(l2 < l1);
  }
}

TEST_CASE("terminal cost is positive definite and admits descent") {
  ControllerFixture f = make_fixture(8, 10);
  auto samples = sample_configuration_parameters(f.t, f.vc, 60, 77);
  int tested = 0;
  for (const auto& raw : samples) {
    // pull the sample toward the steady parameter until it enters the
    // terminal domain
    for (double blend : {0.0, 0.5, 0.8, 0.95}) {
      VectorXd y = (1.0 - blend) * raw + blend * f.synth.y_s;
      double m_val = f.controller->terminal_cost(y);
      if (!std::isfinite(m_val)) continue;
      ++tested;
      if ((y - f.synth.y_s).lpNorm<Eigen::Infinity>() > 1e-7) CHECK(m_val > 0.0);
      // descent: min over y+ of R(y, y+) + M(y+) stays below M(y)
      double best = f.controller->descent_value(y);
      CHECK(best <= m_val + 1e-6);
      break;
    }
    if (tested >= 20) break;
  }
  CHECK(tested >= 20);
}

TEST_CASE("shifted warm start") {
  ControllerFixture f = make_fixture(8, 14);
  SUBCASE("steady solution shifts onto itself") {
    TubeSolution steady;
    steady.y.assign(15, f.synth.y_s);
    steady.u.assign(14, f.synth.u_s);
    steady.u_terminal = f.synth.u_s;
    steady.alpha = 0.0;
    TubeSolution cand = f.controller->shifted_warm_start(steady);
    for (const auto& y : cand.y) CHECK((y - f.synth.y_s).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(std::abs(cand.alpha) < 1e-12);
  }

  SUBCASE("candidate is feasible for every sampled successor and never beats the optimum") {
    VectorXd x(2);
    x << 4.0, 8.0;
    TubeSolution sol = f.controller->mpc_step(x);
    FeedbackResult fb = f.controller->vertex_feedback(x, sol);
    TubeSolution cand = f.controller->shifted_warm_start(sol);

    // state-independent rows of the candidate hold by construction
    for (int k = 0; k < cand.horizon(); ++k) {
      Eigen::VectorXd yk = cand.y[k], yk1 = cand.y[k + 1];
      const auto& u = cand.u[k];
      for (int i = 0; i < f.vc.num_vertices(); ++i) {
        VectorXd lhs = f.block->tube_map(0, i) * yk +
                       f.block->input_map(0) * u.segment(i, 1) + f.w_bar;
        CHECK((lhs - yk1).maxCoeff() <= 1e-7);
      }
    }

    CounterRng rng(15);
    auto bounds = f.sys.W.box_bounds(2);
    for (int draw = 0; draw < 100; ++draw) {
      VectorXd w(2);
      w << rng.uniform(bounds->first[0], bounds->second[0]),
          rng.uniform(bounds->first[1], bounds->second[1]);
      VectorXd xn = f.sys.A_vertices[0] * x + f.sys.B_vertices[0] * fb.input + f.sys.C * w;
      CHECK((f.t.Y * xn - cand.y.front()).maxCoeff() <= 1e-7);
      if (draw < 5) {
        TubeSolution re = f.controller->mpc_step(xn);
        CHECK(cand.objective >= re.objective - 1e-5 * (1.0 + std::abs(re.objective)));
      }
    }
  }
}
