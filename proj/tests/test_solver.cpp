#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cctmpc/solver.hpp"

using namespace cctmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

LinearProgram box_lp() {
  LinearProgram lp;
  lp.c = VectorXd::Ones(1);
  lp.G.resize(0, 1);
  lp.h.resize(0);
  lp.A.resize(0, 1);
  lp.b.resize(0);
  lp.lb = VectorXd::Zero(1);
  lp.ub = VectorXd::Ones(1);
  return lp;
}

LinearProgram simplex_lp() {
  // min x1 + x2  s.t.  x1 + x2 >= 1, x >= 0
  LinearProgram lp;
  lp.c = VectorXd::Ones(2);
  lp.G = MatrixXd::Constant(1, 2, -1.0).sparseView();
  lp.h = -VectorXd::Ones(1);
  lp.A.resize(0, 2);
  lp.b.resize(0);
  lp.lb = VectorXd::Zero(2);
  return lp;
}

}  // namespace

TEST_CASE("box LP has its optimum at the lower bound") {
  SolveResult r = solve_lp(box_lp());
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(std::abs(r.z[0]) < 1e-8);
  CHECK(std::abs(r.objective) < 1e-8);
}

TEST_CASE("LP without an upper bound is unbounded") {
  LinearProgram lp;
  lp.c = -VectorXd::Ones(1);
  lp.G.resize(0, 1);
  lp.h.resize(0);
  lp.A.resize(0, 1);
  lp.b.resize(0);
  lp.lb = VectorXd::Zero(1);
  SolveResult r = solve_lp(lp);
  CHECK(r.status == SolveStatus::Unbounded);
  CHECK(r.has_certificate);
}

TEST_CASE("duals of the simplex LP match the hand KKT system") {
  // KKT: c + G'mu = 0 with complementary slackness -> mu = (1, 0, 0); the
  // bound rows carry zero multipliers at the interior optimizer.
  SolveResult r = solve_lp(simplex_lp());
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-8));
  REQUIRE(r.mu.size() == 3);  // one constraint + two folded lower bounds
  CHECK(r.mu[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(r.mu[1]) < 1e-6);
  CHECK(std::abs(r.mu[2]) < 1e-6);
}

TEST_CASE("infeasible LP returns a Farkas certificate") {
  LinearProgram lp;
  lp.c = VectorXd::Zero(1);
  MatrixXd G(2, 1);
  G << -1, 1;
  lp.G = G.sparseView();
  lp.h.resize(2);
  lp.h << -1.0, 0.0;  // x >= 1 and x <= 0
  lp.A.resize(0, 1);
  lp.b.resize(0);
  SolveResult r = solve_lp(lp);
  REQUIRE(r.status == SolveStatus::Infeasible);
  CHECK(r.has_certificate);
  CHECK(r.mu.minCoeff() > -1e-9);
  CHECK(lp.h.dot(r.mu) < 0.0);
}

TEST_CASE("scalar QP against the hand KKT") {
  QuadraticProgram qp;
  qp.H = MatrixXd::Identity(1, 1).sparseView();
  qp.c = VectorXd::Zero(1);
  qp.G = MatrixXd::Constant(1, 1, -1.0).sparseView();
  qp.h = -VectorXd::Ones(1);
  qp.A.resize(0, 1);
  qp.b.resize(0);
  SolveResult r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.z[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.mu[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("symmetric equality QP splits the budget evenly") {
  QuadraticProgram qp;
  qp.H = MatrixXd::Identity(2, 2).sparseView();
  qp.c = VectorXd::Zero(2);
  qp.G.resize(0, 2);
  qp.h.resize(0);
  qp.A = MatrixXd::Constant(1, 2, 1.0).sparseView();
  qp.b = VectorXd::Ones(1);
  SolveResult r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.z[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.z[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("random strictly convex QP matches active-set enumeration") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  MatrixXd M(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) M(i, j) = nd(rng);
  MatrixXd Hd = M * M.transpose() + 0.5 * MatrixXd::Identity(5, 5);
  VectorXd c(5);
  for (int i = 0; i < 5; ++i) c[i] = nd(rng);
  MatrixXd Gd(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) Gd(i, j) = nd(rng);
  VectorXd h(3);
  for (int i = 0; i < 3; ++i) h[i] = std::abs(nd(rng));

  // oracle: solve the KKT system of every active set, keep the feasible
  // candidate with nonnegative multipliers and the lowest value
  double best = std::numeric_limits<double>::infinity();
  VectorXd best_z;
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<int> act;
    for (int i = 0; i < 3; ++i)
      if (mask >> i & 1) act.push_back(i);
    const int k = static_cast<int>(act.size());
    MatrixXd K = MatrixXd::Zero(5 + k, 5 + k);
    K.topLeftCorner(5, 5) = Hd;
    for (int i = 0; i < k; ++i) {
      K.block(0, 5 + i, 5, 1) = Gd.row(act[i]).transpose();
      K.block(5 + i, 0, 1, 5) = Gd.row(act[i]);
    }
    VectorXd rhs(5 + k);
    rhs.head(5) = -c;
    for (int i = 0; i < k; ++i) rhs[5 + i] = h[act[i]];
    VectorXd sol = K.fullPivLu().solve(rhs);
    VectorXd z = sol.head(5);
    if ((Gd * z - h).maxCoeff() > 1e-9) continue;
    if (k > 0 && sol.tail(k).minCoeff() < -1e-9) continue;
    double obj = 0.5 * z.dot(Hd * z) + c.dot(z);
    if (obj < best) {
      best = obj;
      best_z = z;
    }
  }

  QuadraticProgram qp;
  qp.H = Hd.sparseView();
  qp.c = c;
  qp.G = Gd.sparseView();
  qp.h = h;
  qp.A.resize(0, 5);
  qp.b.resize(0);
  SolveResult r = solve_qp(qp);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.objective == doctest::Approx(best).epsilon(1e-8));
  CHECK((r.z - best_z).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("infeasible QP is classified, not reported as numerical failure") {
  QuadraticProgram qp;
  qp.H = MatrixXd::Identity(1, 1).sparseView();
  qp.c = VectorXd::Zero(1);
  MatrixXd G(2, 1);
  G << -1, 1;
  qp.G = G.sparseView();
  qp.h.resize(2);
  qp.h << -2.0, 1.0;  // x >= 2 and x <= 1
  qp.A.resize(0, 1);
  qp.b.resize(0);
  SolveResult r = solve_qp(qp);
  CHECK(r.status == SolveStatus::Infeasible);
}

TEST_CASE("repeated solves are deterministic") {
  SolveResult a = solve_lp(simplex_lp());
  SolveResult b = solve_lp(simplex_lp());
  REQUIRE(a.status == b.status);
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK(a.objective == b.objective);
}

TEST_CASE("optimal results satisfy the dual contracts") {
  std::vector<LinearProgram> fixtures = {box_lp(), simplex_lp()};
  for (const auto& lp : fixtures) {
    SolveResult r = solve_lp(lp);
    REQUIRE(r.status == SolveStatus::Optimal);
    if (r.mu.size()) CHECK(r.mu.minCoeff() >= -1e-8);
    CHECK(r.complementarity <= 1e-8);
    // weak duality: primal objective above the dual value, with the folded
    // bound rows reconstructed in solver order (G, finite ub, finite lb)
    std::vector<double> hfold;
    for (int i = 0; i < lp.h.size(); ++i) hfold.push_back(lp.h[i]);
    for (int i = 0; i < lp.ub.size(); ++i)
      if (lp.ub[i] < std::numeric_limits<double>::infinity()) hfold.push_back(lp.ub[i]);
    for (int i = 0; i < lp.lb.size(); ++i)
      if (lp.lb[i] > -std::numeric_limits<double>::infinity()) hfold.push_back(-lp.lb[i]);
    double dual_obj = 0.0;
    for (size_t row = 0; row < hfold.size(); ++row) dual_obj -= hfold[row] * r.mu[row];
    CHECK(r.objective >= dual_obj - 1e-6);
  }
}

TEST_CASE("validation rejects malformed programs") {
  LinearProgram lp = simplex_lp();
  lp.h.resize(2);  // row count mismatch
  CHECK_THROWS_AS(lp.validate(), std::invalid_argument);

  LinearProgram nan_lp = simplex_lp();
  nan_lp.c[0] = std::nan("");
  CHECK_THROWS_AS(nan_lp.validate(), std::invalid_argument);

  QuadraticProgram qp;
  MatrixXd H(2, 2);
  H << 1.0, 0.5, -0.5, 1.0;  // not symmetric
  qp.H = H.sparseView();
  qp.c = VectorXd::Zero(2);
  qp.G.resize(0, 2);
  qp.h.resize(0);
  qp.A.resize(0, 2);
  qp.b.resize(0);
  CHECK_THROWS_AS(qp.validate_cost_matrix(), std::invalid_argument);

  MatrixXd Hneg(2, 2);
  Hneg << 1.0, 0.0, 0.0, -1.0;  // indefinite
  qp.H = Hneg.sparseView();
  CHECK_THROWS_AS(qp.validate_cost_matrix(), std::invalid_argument);
}
