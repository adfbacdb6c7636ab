#include "cctmpc/system.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace cctmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> HPolytope::box_bounds(int dim) const {
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -kInf);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, kInf);
  for (int r = 0; r < H.rows(); ++r) {
    int nz = -1;
    for (int j = 0; j < H.cols(); ++j) {
      if (H(r, j) != 0.0) {
        if (nz >= 0) return std::nullopt;  // more than one coordinate in this row
        nz = j;
      }
    }
    if (nz < 0) continue;  // vacuous 0 <= h row
    double coef = H(r, nz);
    double bound = h[r] / coef;
    if (coef > 0)
      hi[nz] = std::min(hi[nz], bound);
    else
      lo[nz] = std::max(lo[nz], bound);
  }
  return std::make_pair(lo, hi);
}

HPolytope HPolytope::box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(lo.size());
  HPolytope p;
  p.H = Eigen::MatrixXd::Zero(2 * n, n);
  p.h.resize(2 * n);
  for (int i = 0; i < n; ++i) {
    p.H(i, i) = 1.0;
    p.h[i] = hi[i];
    p.H(n + i, i) = -1.0;
    p.h[n + i] = -lo[i];
  }
  return p;
}

ValidationReport validate_system(const UncertainSystem& sys, const SolverSettings& settings) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& msg) {
    rep.ok = false;
    rep.issues.push_back(msg);
  };

  if (sys.A_vertices.empty()) fail("no model vertices (l must be >= 1)");
  if (sys.A_vertices.size() != sys.B_vertices.size())
    fail("A/B vertex count mismatch");
  const int nx = sys.state_dim();
  const int nu = sys.input_dim();
  const int nw = sys.disturbance_dim();
  for (size_t j = 0; j < sys.A_vertices.size(); ++j) {
    if (sys.A_vertices[j].rows() != nx || sys.A_vertices[j].cols() != nx)
      fail("A vertex " + std::to_string(j + 1) + " is not " + std::to_string(nx) + "x" + std::to_string(nx));
    if (j < sys.B_vertices.size() &&
        (sys.B_vertices[j].rows() != nx || sys.B_vertices[j].cols() != nu))
      fail("B vertex " + std::to_string(j + 1) + " has inconsistent dimensions");
  }
  if (!sys.W.unconstrained() && sys.W.H.cols() != nw) fail("W dimension does not match C columns");
  if (sys.W.H.rows() != sys.W.h.size()) fail("W: H/h row mismatch");
  if (!sys.X.unconstrained() && sys.X.H.cols() != nx) fail("X dimension does not match state");
  if (sys.X.H.rows() != sys.X.h.size()) fail("X: H/h row mismatch");
  if (!sys.U.unconstrained() && sys.U.H.cols() != nu) fail("U dimension does not match input");
  if (sys.U.H.rows() != sys.U.h.size()) fail("U: H/h row mismatch");

  if (rep.ok && nw > 0) {
    // W must be compact: every +-coordinate support LP has to be bounded.
    for (int dcoord = 0; dcoord < nw && rep.ok; ++dcoord) {
      for (double sgn : {1.0, -1.0}) {
        LinearProgram lp;
        lp.c = Eigen::VectorXd::Zero(nw);
        lp.c[dcoord] = -sgn;
        lp.G = sys.W.H.sparseView();
        lp.h = sys.W.h;
        lp.A.resize(0, nw);
        lp.b.resize(0);
        SolveResult r = solve_lp(lp, settings);
        if (r.status == SolveStatus::Unbounded) {
          fail("W unbounded in coordinate " + std::to_string(dcoord + 1));
          break;
        }
        if (r.status == SolveStatus::Infeasible) {
          fail("W is empty");
          break;
        }
      }
    }
  }
  return rep;
}

DisturbanceSupport disturbance_support(const TemplatePolytope& t, const UncertainSystem& sys,
                                       SupportMethod method, const SolverSettings& settings) {
  const int m = t.num_rows();
  const int nw = sys.disturbance_dim();
  if (sys.C.rows() != t.dim())
    throw CctmpcError("disturbance_support: C rows must match template dimension");

  DisturbanceSupport out;
  out.w_bar.resize(m);

  auto box = sys.W.box_bounds(nw);
  bool box_ok = box.has_value() && box->first.allFinite() && box->second.allFinite();
  if (method == SupportMethod::ClosedFormBox && !box_ok)
    throw CctmpcError("disturbance_support: W is not a bounded box");
  bool use_box = method == SupportMethod::ClosedFormBox || (method == SupportMethod::Auto && box_ok);

  if (use_box) {
    Eigen::VectorXd center = 0.5 * (box->first + box->second);
    Eigen::VectorXd halfwidth = 0.5 * (box->second - box->first);
    for (int i = 0; i < m; ++i) {
      Eigen::RowVectorXd row = t.Y.row(i) * sys.C;
      out.w_bar[i] = row.cwiseAbs().dot(halfwidth) + row.dot(center);
    }
    return out;
  }

  for (int i = 0; i < m; ++i) {
    LinearProgram lp;
    lp.c = -(t.Y.row(i) * sys.C).transpose();
    lp.G = sys.W.H.sparseView();
    lp.h = sys.W.h;
    lp.A.resize(0, nw);
    lp.b.resize(0);
    SolveResult r = solve_lp(lp, settings);
    if (r.status == SolveStatus::Unbounded)
      throw UnboundedDisturbanceError("disturbance support unbounded on template row " +
                                      std::to_string(i + 1));
    if (!r.optimal())
      throw CctmpcError("disturbance support LP " + to_string(r.status) + " on row " +
                        std::to_string(i + 1));
    out.w_bar[i] = -r.objective;
  }
  return out;
}

}  // namespace cctmpc
