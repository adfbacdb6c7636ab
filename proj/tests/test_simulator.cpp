#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cctmpc/json_io.hpp"
#include "cctmpc/simulator.hpp"
#include "test_support.hpp"

using namespace cctmpc;
using namespace cctmpc::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LoopFixture {
  TemplatePolytope t;
  VertexConfiguration vc;
  UncertainSystem sys;
  VectorXd w_bar;
  StageCost cost;
  SynthesisData synth;
  std::unique_ptr<FMembershipBlock> block;
  std::unique_ptr<CctmpcController> controller;
};

LoopFixture make_loop_fixture(int m, int horizon) {
  LoopFixture f;
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

}  // namespace

TEST_CASE("uncertainty sampling") {
  UncertainSystem sys = example1_system();
  SUBCASE("same seed gives the identical stream") {
    CounterRng a(42), b(42);
    for (int i = 0; i < 50; ++i) {
      auto sa = sample_uncertainty(sys, DisturbanceMode::BoxUniform, ModelMode::DirichletMix, a);
      auto sb = sample_uncertainty(sys, DisturbanceMode::BoxUniform, ModelMode::DirichletMix, b);
      CHECK((sa.w - sb.w).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("degenerate disturbance set always returns zero") {
    UncertainSystem frozen = sys;
    frozen.W = HPolytope::box(VectorXd::Zero(2), VectorXd::Zero(2));
    CounterRng rng(7);
    for (int i = 0; i < 20; ++i) {
      auto s = sample_uncertainty(frozen, DisturbanceMode::BoxUniform, ModelMode::DirichletMix, rng);
      CHECK(s.w.lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
  SUBCASE("single-vertex models are constant") {
    CounterRng rng(9);
    for (int i = 0; i < 10; ++i) {
      auto s = sample_uncertainty(sys, DisturbanceMode::VertexExtreme, ModelMode::DirichletMix, rng);
      CHECK((s.A - sys.A_vertices[0]).lpNorm<Eigen::Infinity>() == 0.0);
      CHECK(s.model_weights[0] == 1.0);
    }
  }
  SUBCASE("extreme draws sit on the box corners") {
    auto bounds = sys.W.box_bounds(2);
    CounterRng rng(11);
    for (int i = 0; i < 30; ++i) {
      auto s = sample_uncertainty(sys, DisturbanceMode::VertexExtreme, ModelMode::DirichletMix, rng);
      for (int d = 0; d < 2; ++d)
        CHECK((s.w[d] == bounds->first[d] || s.w[d] == bounds->second[d]));
    }
  }
}

TEST_CASE("closed loop is deterministic for a fixed seed") {
  LoopFixture f = make_loop_fixture(8, 12);
  ScenarioConfig cfg;
  cfg.seed = 5;
  cfg.steps = 6;
  cfg.x0 = VectorXd::Zero(2);
  cfg.x0 << 4.0, 8.0;
  auto logs_a = run_closed_loop(*f.controller, f.sys, cfg);
  LoopFixture g = make_loop_fixture(8, 12);
  auto logs_b = run_closed_loop(*g.controller, g.sys, cfg);
  REQUIRE(logs_a.size() == logs_b.size());
  CHECK(logs_to_csv(logs_a) == logs_to_csv(logs_b));
}

TEST_CASE("membership residual and descent along the loop") {
  LoopFixture f = make_loop_fixture(8, 12);
  for (std::uint64_t seed : {1ull, 2ull}) {
    for (DisturbanceMode mode : {DisturbanceMode::BoxUniform, DisturbanceMode::VertexExtreme}) {
      LoopFixture g = make_loop_fixture(8, 12);
      ScenarioConfig cfg;
      cfg.seed = seed;
      cfg.steps = 14;
      cfg.x0 = VectorXd(2);
      cfg.x0 << 4.0, 8.0;
      cfg.disturbance_mode = mode;
      auto logs = run_closed_loop(*g.controller, g.sys, cfg);
      REQUIRE(static_cast<int>(logs.size()) == cfg.steps);
      for (const auto& log : logs) {
        CHECK(log.feasible);
        CHECK(log.residual <= 1e-7);
      }
      for (size_t k = 0; k + 1 < logs.size(); ++k) {
        if (logs[k].lyapunov > 1e-6)
          CHECK(logs[k + 1].lyapunov < logs[k].lyapunov);
      }
    }
  }
}

TEST_CASE("zero-disturbance runs stay inside the steady polytope") {
  LoopFixture f = make_loop_fixture(8, 8);
  UncertainSystem frozen = f.sys;
  frozen.W = HPolytope::box(VectorXd::Zero(2), VectorXd::Zero(2));
  VectorXd center = VectorXd::Zero(2);
  for (const auto& V : f.vc.vertex_maps) center += V * f.synth.y_s;
  center /= f.vc.num_vertices();
  ScenarioConfig cfg;
  cfg.seed = 3;
  cfg.steps = 10;
  cfg.x0 = center;
  auto logs = run_closed_loop(*f.controller, frozen, cfg);
  for (const auto& log : logs) {
    CHECK((f.t.Y * log.x - f.synth.y_s).maxCoeff() <= 1e-7);
    CHECK(log.w.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("infeasible initial state surfaces as an error") {
  LoopFixture f = make_loop_fixture(8, 8);
  ScenarioConfig cfg;
  cfg.seed = 1;
  cfg.steps = 3;
  cfg.x0 = VectorXd(2);
  cfg.x0 << 400.0, 400.0;
  CHECK_THROWS_AS(run_closed_loop(*f.controller, f.sys, cfg), InfeasibleStateError);
}
