#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "cctmpc/json_io.hpp"
#include "test_support.hpp"

using namespace cctmpc;
using namespace cctmpc::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
std::string fixture(const std::string& name) {
  return std::string(CCTMPC_FIXTURE_DIR) + "/" + name;
}
}  // namespace

TEST_CASE("problem files parse with consistent dimensions") {
  for (const char* name : {"example1.json", "example2.json", "example3.json"}) {
    ProblemSpec spec = parse_problem(read_text_file(fixture(name)));
    CHECK(validate_system(spec.system).ok);
    CHECK(spec.beta > 0.0);
    CHECK(spec.horizon >= 1);
  }
}

TEST_CASE("schema violations throw with context") {
  CHECK_THROWS_AS(parse_problem("not json at all"), SchemaError);
  CHECK_THROWS_AS(parse_problem("{}"), SchemaError);
  CHECK_THROWS_AS(parse_problem(R"({"system": {"A_vertices": "wrong"}})"), SchemaError);
  // ragged matrix
  CHECK_THROWS_AS(parse_problem(R"({
    "system": {"A_vertices": [[[1, 0], [0]]], "B_vertices": [[[1], [1]]],
               "C": [[1, 0], [0, 1]], "W": {"H": [[1, 0]], "h": [1]}},
    "template": {"type": "regular_2d", "m": 4},
    "cost": {"type": "parameter_quadratic", "P": [[1]]}
  })"),
                  SchemaError);
}

TEST_CASE("template serialization round-trips byte for byte") {
  auto [t, vc] = regular_template_2d(6);
  std::string first = template_to_json(t, vc);
  auto [t2, vc2] = template_from_json(first);
  std::string second = template_to_json(t2, vc2);
  CHECK(first == second);
  CHECK(t2.Y.isApprox(t.Y));
  CHECK(vc2.vertex_sets == vc.vertex_sets);
  REQUIRE(vc2.vertex_maps.size() == vc.vertex_maps.size());
  for (size_t i = 0; i < vc.vertex_maps.size(); ++i)
    CHECK((vc2.vertex_maps[i] - vc.vertex_maps[i]).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("synthesis data round-trips exactly") {
  SynthesisData d;
  d.sigma = VectorXd::LinSpaced(4, 0.1, 1.3);
  d.beta = 0.95;
  d.y_s = VectorXd::LinSpaced(4, -0.3, 0.9);
  d.u_s = VectorXd::LinSpaced(3, -2.0, 2.0);
  d.lambda = VectorXd::LinSpaced(4, -7.0, 3.0);
  d.V_s = 27.602825881143659;
  d.u_sigma = VectorXd::LinSpaced(3, -1.0, 1.0);
  d.gamma = 0.94492563415147857;
  d.lipschitz = 457.123456789;
  d.rho = 1149.4193096899021;
  SynthesisData r = synthesis_from_json(synthesis_to_json(d));
  CHECK(r.sigma == d.sigma);
  CHECK(r.beta == d.beta);
  CHECK(r.y_s == d.y_s);
  CHECK(r.u_s == d.u_s);
  CHECK(r.lambda == d.lambda);
  CHECK(r.V_s == d.V_s);
  CHECK(r.u_sigma == d.u_sigma);
  CHECK(r.gamma == d.gamma);
  CHECK(r.lipschitz == d.lipschitz);
  CHECK(r.rho == d.rho);
  CHECK(synthesis_to_json(r) == synthesis_to_json(d));
}

TEST_CASE("csv log layout") {
  StepLog log;
  log.k = 0;
  log.x = VectorXd::Zero(2);
  log.x << 4.0, 8.0;
  log.u = VectorXd::Constant(1, -10.0);
  log.w = VectorXd::Zero(2);
  log.lyapunov = 420.5;
  log.feasible = true;
  log.residual = 1e-11;
  std::string csv = logs_to_csv({log});
  CHECK(csv.rfind("k,x0,x1,u0,w0,w1,lyapunov,residual\n", 0) == 0);
  CHECK(csv.find("\n0,4,8,-10,0,0,420.5,") != std::string::npos);
}

TEST_CASE("grid template source matches the direct construction") {
  TemplateSource src;
  src.kind = TemplateSource::Kind::Grid3d;
  src.grid_range = 1;
  auto [t, vc] = build_template(src);
  CHECK(t.num_rows() == 26);
  CHECK(vc.num_vertices() == 48);
}

TEST_CASE("cli subcommands and exit codes") {
#ifdef CCTMPC_CLI_PATH
  const std::string cli = CCTMPC_CLI_PATH;
  auto run = [&cli](const std::string& args) {
    int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  const std::string tmpdir = "/tmp/cctmpc_io_test";
  std::system(("mkdir -p " + tmpdir).c_str());

  SUBCASE("full pipeline succeeds") {
    CHECK(run("template --spec " + fixture("example1.json") + " --out " + tmpdir + "/t.json") == 0);
    CHECK(run("synth --spec " + fixture("example1.json") + " --template " + tmpdir +
              "/t.json --out " + tmpdir + "/s.json") == 0);
    CHECK(run("mpc-step --spec " + fixture("example1.json") + " --template " + tmpdir +
              "/t.json --synth " + tmpdir + "/s.json --state 4,8 --out " + tmpdir +
              "/sol.json --horizon 8") == 0);
    CHECK(run("export-plot --spec " + fixture("example1.json") + " --template " + tmpdir +
              "/t.json --synth " + tmpdir + "/s.json --state 4,8 --out " + tmpdir +
              "/tube.csv --horizon 8") == 0);
    // template file written by the tool round-trips byte for byte
    std::string text = read_text_file(tmpdir + "/t.json");
    auto [t, vc] = template_from_json(text);
    CHECK(template_to_json(t, vc) == text);
  }

  SUBCASE("infeasible synthesis exits with 2") {
    std::string spec = read_text_file(fixture("example1.json"));
    auto pos = spec.find("\"m\": 16");
    REQUIRE(pos != std::string::npos);
    std::string cut = spec.substr(0, pos) + "\"m\": 4" + spec.substr(pos + 7);
    write_text_file(tmpdir + "/narrow.json", cut);
    CHECK(run("synth --spec " + tmpdir + "/narrow.json --out " + tmpdir + "/s4.json") == 2);
  }

  SUBCASE("runtime infeasibility exits with 3") {
    CHECK(run("template --spec " + fixture("example1.json") + " --out " + tmpdir + "/t.json") == 0);
    CHECK(run("synth --spec " + fixture("example1.json") + " --template " + tmpdir +
              "/t.json --out " + tmpdir + "/s.json") == 0);
    CHECK(run("mpc-step --spec " + fixture("example1.json") + " --template " + tmpdir +
              "/t.json --synth " + tmpdir + "/s.json --state 400,400 --out " + tmpdir +
              "/sol.json --horizon 8") == 3);
  }

  SUBCASE("schema errors exit with 4") {
    write_text_file(tmpdir + "/corrupt.json", "{\"system\": 12}");
    CHECK(run("synth --spec " + tmpdir + "/corrupt.json --out " + tmpdir + "/x.json") == 4);
    write_text_file(tmpdir + "/corrupt2.json", "{");
    CHECK(run("template --spec " + tmpdir + "/corrupt2.json --out " + tmpdir + "/x.json") == 4);
  }
#endif
}
