#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cctmpc/geometry.hpp"
#include "test_support.hpp"

using namespace cctmpc;
using namespace cctmpc::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

TemplatePolytope unit_box_2d() {
  TemplatePolytope t;
  t.Y.resize(4, 2);
  t.Y << 1, 0, 0, 1, -1, 0, 0, -1;
  t.sigma = VectorXd::Ones(4);
  return t;
}

bool cone_equal(const MatrixXd& Ea, const MatrixXd& Eb) {
  return reduction_certificate(Ea, Eb) && reduction_certificate(Eb, Ea);
}

}  // namespace

TEST_CASE("unit box vertex configuration") {
  auto vc = enumerate_vertex_configuration(unit_box_2d());
  REQUIRE(vc.num_vertices() == 4);
  std::vector<std::vector<int>> expected = {{0, 1}, {0, 3}, {1, 2}, {2, 3}};
  CHECK(vc.vertex_sets == expected);
  // the two reduced rows span y1 + y3 >= 0 and y2 + y4 >= 0
  MatrixXd target(2, 4);
  target << -1, 0, -1, 0, 0, -1, 0, -1;
  CHECK(cone_equal(vc.E, target));
}

TEST_CASE("face queries on the unit box") {
  TemplatePolytope t = unit_box_2d();
  CHECK(face_nonempty(t, t.sigma, {0, 1}));   // corner
  CHECK(!face_nonempty(t, t.sigma, {0, 2}));  // opposite facets
  CHECK(face_nonempty(t, t.sigma, {}));       // whole polytope
}

TEST_CASE("pyramid template reproduces the printed face structure") {
  TemplatePolytope degenerate = pyramid_template(3.0);
  CHECK(face_nonempty(degenerate, degenerate.sigma, {0, 1, 2, 3}));
  SimplicityReport rep = check_entirely_simple(degenerate);
  CHECK(!rep.entirely_simple);
  REQUIRE(!rep.witnesses.empty());
  CHECK(rep.witnesses.front() == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(enumerate_vertex_configuration(degenerate), NotEntirelySimpleError);

  TemplatePolytope simple = pyramid_template(2.5);
  SimplicityReport rep2 = check_entirely_simple(simple);
  CHECK(rep2.entirely_simple);
  CHECK(rep2.num_vertices == 10);
  auto vc = enumerate_vertex_configuration(simple);
  CHECK(vc.num_vertices() == 10);
}

TEST_CASE("conic matrix blocks follow Y V_i - I") {
  TemplatePolytope t = unit_box_2d();
  auto vc = enumerate_vertex_configuration(t);
  MatrixXd raw = conic_matrix(t, vc.vertex_maps);
  REQUIRE(raw.rows() == 16);
  // block of the {1,2} vertex: rows 3 and 4 encode -y1-y3 <= 0, -y2-y4 <= 0
  MatrixXd block = raw.topRows(4);
  VectorXd row3 = block.row(2).transpose();
  VectorXd expect3(4);
  expect3 << -1, 0, -1, 0;
  CHECK((row3 - expect3).lpNorm<Eigen::Infinity>() < 1e-12);
  // seed feasibility of the raw cone
  CHECK((raw * t.sigma).maxCoeff() <= 1e-12);
}

TEST_CASE("row reduction matches a dense grid check on the box cone") {
  TemplatePolytope t = unit_box_2d();
  auto vc = enumerate_vertex_configuration(t);
  REQUIRE(vc.E.rows() == 2);
  // brute-force cone equality over a coarse grid of parameters
  for (double a : {-1.0, -0.5, 0.0, 0.5, 1.0})
    for (double b : {-1.0, 0.0, 1.0})
      for (double c : {-1.0, 0.0, 1.0})
        for (double d : {-1.0, -0.25, 0.5, 1.0}) {
          VectorXd y(4);
          y << a, b, c, d;
          bool raw_in = (vc.E_raw * y).maxCoeff() <= 1e-12;
          bool red_in = (vc.E * y).maxCoeff() <= 1e-12;
          CHECK(raw_in == red_in);
        }
  CHECK(reduction_certificate(vc.E_raw, vc.E));
}

TEST_CASE("grid template matches the published combinatorics") {
  TemplatePolytope t = grid_template_3d(1);
  REQUIRE(t.num_rows() == 26);
  auto vc = enumerate_vertex_configuration(t);
  CHECK(vc.num_vertices() == 48);
  CHECK(vc.E.rows() == 48);
  int nnz = 0;
  for (int i = 0; i < vc.E.rows(); ++i)
    for (int j = 0; j < vc.E.cols(); ++j)
      if (std::abs(vc.E(i, j)) > 1e-11) ++nnz;
  CHECK(nnz == 168);
}

TEST_CASE("closed-form 2-D template") {
  SUBCASE("square angles give the axis cone rows") {
    auto [t, vc] = regular_template_2d(4);
    // all band coefficients: Delta = -1, Sigma = 0
    for (int i = 0; i < 4; ++i) {
      CHECK(vc.E(i, i) == doctest::Approx(-1.0));
      CHECK(std::abs(vc.E(i, (i + 1) % 4)) < 1e-12);
      CHECK(vc.E(i, (i + 2) % 4) == doctest::Approx(-1.0));
    }
  }
  SUBCASE("regular hexagon coefficients") {
    auto [t, vc] = regular_template_2d(6);
    CHECK(vc.E(0, 0) == doctest::Approx(-std::sin(M_PI / 3)));
    CHECK(vc.E(0, 1) == doctest::Approx(std::sin(2 * M_PI / 3)));
    CHECK(vc.E(0, 2) == doctest::Approx(-std::sin(M_PI / 3)));
  }
  SUBCASE("closed form is cone-equal to the generic pipeline") {
    for (int m = 4; m <= 12; ++m) {
      auto [t, vc] = regular_template_2d(m);
      auto full = enumerate_vertex_configuration(t);
      CHECK(cone_equal(vc.E, full.E));
    }
  }
  SUBCASE("angle preconditions") {
    CHECK_THROWS_AS(build_template_2d({0.0, 1.0}), AngleSpacingError);
    CHECK_THROWS_AS(build_template_2d({0.0, 0.5, 1.0}), AngleSpacingError);  // range <= pi
    CHECK_THROWS_AS(build_template_2d({0.0, M_PI + 0.1, 2 * M_PI - 0.1}), AngleSpacingError);
    CHECK_THROWS_AS(build_template_2d({0.0, 1.0, 1.0, 4.0}), AngleSpacingError);
  }
}

TEST_CASE("vertices_of maps the parameter through the vertex maps") {
  TemplatePolytope t = unit_box_2d();
  auto vc = enumerate_vertex_configuration(t);
  ConfiguredPolytope seed{&t, &vc, t.sigma};
  auto pts = vertices_of(seed);
  REQUIRE(pts.size() == 4);
  auto oracle = brute_force_vertices(t.Y, t.sigma);
  REQUIRE(oracle.size() == 4);
  for (const auto& v : oracle) CHECK(hull_membership(v, pts, 1e-8));

  ConfiguredPolytope apex{&t, &vc, VectorXd::Zero(4)};
  for (const auto& p : vertices_of(apex)) CHECK(p.norm() < 1e-12);

  VectorXd bad = t.sigma;
  bad[0] = -2.0;  // cone violated: y1 + y3 < 0
  ConfiguredPolytope outside{&t, &vc, bad};
  CHECK_THROWS_AS(vertices_of(outside), ConfigurationViolatedError);
}

TEST_CASE("hull membership basics") {
  std::vector<VectorXd> square;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      VectorXd v(2);
      v << sx, sy;
      square.push_back(v);
    }
  VectorXd centroid = VectorXd::Zero(2);
  CHECK(hull_membership(centroid, square));
  CHECK(hull_membership(square[0], square));
  VectorXd outside(2);
  outside << 3.0, 0.0;
  CHECK(!hull_membership(outside, square));
}

TEST_CASE("support parameter") {
  TemplatePolytope t = unit_box_2d();
  std::vector<VectorXd> square;
  for (double sx : {-1.0, 1.0})
    for (double sy : {-1.0, 1.0}) {
      VectorXd v(2);
      v << sx, sy;
      square.push_back(v);
    }
  VectorXd y = support_parameter(t, square);
  CHECK((y - VectorXd::Ones(4)).lpNorm<Eigen::Infinity>() < 1e-12);

  VectorXd p(2);
  p << 0.3, -0.7;
  VectorXd yp = support_parameter(t, {p});
  CHECK((yp - t.Y * p).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK((t.Y * p - yp).maxCoeff() <= 1e-12);

  // 2-D support parameters stay inside the configuration cone
  auto [t8, vc8] = regular_template_2d(8);
  CounterRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<VectorXd> cloud;
    for (int i = 0; i < 5; ++i) cloud.push_back(random_vector(rng, 2, -2.0, 2.0));
    VectorXd ys = support_parameter(t8, cloud);
    CHECK((vc8.E * ys).maxCoeff() <= 1e-9 * (1.0 + ys.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("hull equality property on sampled cone parameters") {
  auto [t, vc] = regular_template_2d(8);
  auto samples = sample_configuration_parameters(t, vc, 100, 2024);
  REQUIRE(samples.size() == 100);
  for (const auto& y : samples) {
    double tol = 1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>());
    ConfiguredPolytope cp{&t, &vc, y};
    auto pts = vertices_of(cp);
    for (const auto& p : pts) CHECK((t.Y * p - y).maxCoeff() <= tol);
    for (const auto& v : brute_force_vertices(t.Y, y)) CHECK(hull_membership(v, pts, 1e-8));
  }
}

TEST_CASE("configuration domain is a convex cone") {
  auto [t, vc] = regular_template_2d(6);
  auto samples = sample_configuration_parameters(t, vc, 10, 99);
  CounterRng rng(5);
  for (size_t i = 0; i + 1 < samples.size(); i += 2) {
    double a = rng.uniform(0.0, 3.0), b = rng.uniform(0.0, 3.0);
    VectorXd mix = a * samples[i] + b * samples[i + 1];
    CHECK((vc.E * mix).maxCoeff() <= 1e-7 * (1.0 + mix.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("nonnegative parameters always give nonempty polyhedra") {
  TemplatePolytope t = pyramid_template(3.0);
  CounterRng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd y = random_vector(rng, 7, 0.0, 2.0);
    CHECK(face_nonempty(t, y, {}));
  }
}

TEST_CASE("reduction soundness certificate on the 4-state template") {
  TemplatePolytope t = example3_template();
  auto vc = enumerate_vertex_configuration(t);
  CHECK(vc.num_vertices() == 8);
  CHECK(reduction_certificate(vc.E_raw, vc.E));
  // cone equality with the two-row reduced matrix of the fixture
  MatrixXd printed(2, 6);
  printed << -1, -1, 0, 0, 0, 0, 0, 0, -2, -1, -1, -2;
  CHECK(cone_equal(vc.E, printed));
}

TEST_CASE("template validation catches malformed seeds") {
  TemplatePolytope t;
  t.Y.resize(2, 2);
  t.Y << 1, 0, 0, 0;  // zero row
  t.sigma = VectorXd::Ones(2);
  CHECK_THROWS_AS(t.validate(), CctmpcError);

  TemplatePolytope open_cone;  // half-space pair, unbounded
  open_cone.Y.resize(2, 2);
  open_cone.Y << 1, 0, -1, 0;
  open_cone.sigma = VectorXd::Ones(2);
  CHECK_THROWS_AS(open_cone.validate(), CctmpcError);
}
