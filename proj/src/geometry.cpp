#include "cctmpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cctmpc/rng.hpp"

namespace cctmpc {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool next_combination(std::vector<int>& idx, int m) {
  const int k = static_cast<int>(idx.size());
  for (int i = k - 1; i >= 0; --i) {
    if (idx[i] < m - k + i) {
      ++idx[i];
      for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
      return true;
    }
  }
  return false;
}

std::string format_index_set(const std::vector<int>& rows) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < rows.size(); ++i) os << (i ? "," : "") << rows[i] + 1;
  os << "}";
  return os.str();
}

// max e'y  s.t.  rows(W) y <= 0, ||y||_inf <= 1. Always bounded.
double cone_support_value(const Eigen::VectorXd& e, const Eigen::MatrixXd& rows,
                          const std::vector<int>& active, const SolverSettings& settings,
                          Eigen::VectorXd* maximizer) {
  const int m = static_cast<int>(e.size());
  LinearProgram lp;
  lp.c = -e;
  Eigen::MatrixXd Gd(active.size(), m);
  for (size_t r = 0; r < active.size(); ++r) Gd.row(r) = rows.row(active[r]);
  lp.G = Gd.sparseView();
  lp.h = Eigen::VectorXd::Zero(active.size());
  lp.A.resize(0, m);
  lp.b.resize(0);
  lp.lb = -Eigen::VectorXd::Ones(m);
  lp.ub = Eigen::VectorXd::Ones(m);
  SolveResult res = solve_lp(lp, settings);
  if (res.status == SolveStatus::NumericalFailure) {
    // near-duplicate rows (perturbed seeds of templates with repeated facet
    // directions) can defeat the tight solve; a relaxed pass still decides
    // keep-or-drop correctly because true support values sit far from zero
    SolverSettings relaxed = settings;
    relaxed.feas_tol *= 100.0;
    relaxed.stat_tol *= 100.0;
    relaxed.comp_tol *= 100.0;
    relaxed.max_iter = std::max(settings.max_iter, 400);
    res = solve_lp(lp, relaxed);
  }
  if (!res.optimal()) throw CctmpcError("conic row reduction: support LP " + to_string(res.status));
  if (maximizer) *maximizer = res.z;
  return -res.objective;
}

}  // namespace

void TemplatePolytope::validate(const SolverSettings& settings) const {
  const int m = num_rows();
  const int n = dim();
  if (m == 0 || n == 0) throw CctmpcError("template: empty Y");
  if (sigma.size() != m) throw CctmpcError("template: sigma length mismatch");
  for (int i = 0; i < m; ++i) {
    if (Y.row(i).lpNorm<Eigen::Infinity>() < 1e-12)
      throw CctmpcError("template: zero row " + std::to_string(i + 1));
  }
  if (!face_nonempty(*this, sigma, {}, settings)) throw CctmpcError("template: P(Y,sigma) is empty");
  for (int d = 0; d < n; ++d) {
    for (double sgn : {1.0, -1.0}) {
      LinearProgram lp;
      lp.c = Eigen::VectorXd::Zero(n);
      lp.c[d] = -sgn;
      lp.G = Y.sparseView();
      lp.h = sigma;
      lp.A.resize(0, n);
      lp.b.resize(0);
      SolveResult res = solve_lp(lp, settings);
      if (res.status == SolveStatus::Unbounded)
        throw CctmpcError("template: P(Y,sigma) unbounded in coordinate " + std::to_string(d + 1));
      if (!res.optimal()) throw CctmpcError("template: boundedness LP " + to_string(res.status));
    }
  }
}

bool face_nonempty(const TemplatePolytope& t, const Eigen::VectorXd& y,
                   const std::vector<int>& rows, const SolverSettings& settings) {
  const int m = t.num_rows();
  const int n = t.dim();
  if (y.size() != m) throw CctmpcError("face_nonempty: parameter length mismatch");
  for (int i : rows) {
    if (i < 0 || i >= m) throw CctmpcError("face_nonempty: row index out of range");
  }
  // min s  s.t.  Yx - y <= s 1,  y_I - Y_I x <= s 1,  s >= 0
  const int rows_total = m + static_cast<int>(rows.size());
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(n + 1);
  lp.c[n] = 1.0;
  Eigen::MatrixXd Gd(rows_total, n + 1);
  Eigen::VectorXd h(rows_total);
  Gd.block(0, 0, m, n) = t.Y;
  Gd.block(0, n, m, 1).setConstant(-1.0);
  h.head(m) = y;
  for (size_t r = 0; r < rows.size(); ++r) {
    Gd.block(m + r, 0, 1, n) = -t.Y.row(rows[r]);
    Gd(m + r, n) = -1.0;
    h[m + r] = -y[rows[r]];
  }
  lp.G = Gd.sparseView();
  lp.h = h;
  lp.A.resize(0, n + 1);
  lp.b.resize(0);
  lp.lb = Eigen::VectorXd::Constant(n + 1, -std::numeric_limits<double>::infinity());
  lp.lb[n] = 0.0;
  SolveResult res = solve_lp(lp, settings);
  if (!res.optimal())
    throw CctmpcError("face_nonempty: feasibility LP " + to_string(res.status));
  return res.objective <= 1e-9 * (1.0 + y.lpNorm<Eigen::Infinity>());
}

namespace {

struct VertexScan {
  std::vector<std::vector<int>> kept;
  std::vector<Eigen::VectorXd> points;
  std::vector<std::vector<int>> degenerate;  // active sets with > n rows
};

VertexScan scan_vertices(const TemplatePolytope& t) {
  const int m = t.num_rows();
  const int n = t.dim();
  const double active_tol = 1e-9 * (1.0 + t.sigma.lpNorm<Eigen::Infinity>());
  VertexScan out;
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  do {
    Eigen::MatrixXd YI(n, n);
    Eigen::VectorXd sI(n);
    for (int k = 0; k < n; ++k) {
      YI.row(k) = t.Y.row(idx[k]);
      sI[k] = t.sigma[idx[k]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(YI);
    if (!lu.isInvertible()) continue;
    Eigen::VectorXd v = lu.solve(sI);
    Eigen::VectorXd slack = t.Y * v - t.sigma;
    if (slack.maxCoeff() > active_tol) continue;
    std::vector<int> active;
    for (int i = 0; i < m; ++i) {
      if (std::abs(slack[i]) <= active_tol) active.push_back(i);
    }
    if (static_cast<int>(active.size()) > n) {
      if (std::find(out.degenerate.begin(), out.degenerate.end(), active) == out.degenerate.end())
        out.degenerate.push_back(active);
      continue;
    }
    if (active == idx) {
      out.kept.push_back(idx);
      out.points.push_back(v);
    }
  } while (next_combination(idx, m));
  return out;
}

}  // namespace

VertexConfiguration enumerate_vertex_configuration(const TemplatePolytope& t,
                                                   const SolverSettings& settings) {
  t.validate(settings);
  VertexScan scan = scan_vertices(t);
  if (!scan.degenerate.empty()) {
    std::ostringstream os;
    os << "seed polytope is not entirely simple; offending active sets:";
    for (const auto& w : scan.degenerate) os << " " << format_index_set(w);
    throw NotEntirelySimpleError(os.str(), scan.degenerate);
  }
  if (scan.kept.empty()) throw CctmpcError("seed polytope has no vertices");

  VertexConfiguration vc;
  vc.vertex_sets = scan.kept;
  const int n = t.dim();
  const int m = t.num_rows();
  for (const auto& I : vc.vertex_sets) {
    Eigen::MatrixXd YI(n, n);
    for (int k = 0; k < n; ++k) YI.row(k) = t.Y.row(I[k]);
    Eigen::MatrixXd Yinv = YI.inverse();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, m);
    for (int k = 0; k < n; ++k) V.col(I[k]) = Yinv.col(k);
    vc.vertex_maps.push_back(std::move(V));
  }
  vc.E_raw = conic_matrix(t, vc.vertex_maps);
  vc.E = reduce_conic_rows(vc.E_raw, settings);
  return vc;
}

SimplicityReport check_entirely_simple(const TemplatePolytope& t) {
  SimplicityReport rep;
  VertexScan scan = scan_vertices(t);
  rep.witnesses = scan.degenerate;
  rep.entirely_simple = scan.degenerate.empty() && !scan.kept.empty();
  rep.num_vertices = static_cast<int>(scan.kept.size());
  return rep;
}

Eigen::MatrixXd conic_matrix(const TemplatePolytope& t,
                             const std::vector<Eigen::MatrixXd>& vertex_maps) {
  const int m = t.num_rows();
  const int mbar = static_cast<int>(vertex_maps.size());
  Eigen::MatrixXd E(mbar * m, m);
  for (int i = 0; i < mbar; ++i) {
    if (vertex_maps[i].rows() != t.dim() || vertex_maps[i].cols() != m)
      throw CctmpcError("conic_matrix: vertex map dimension mismatch");
    E.block(i * m, 0, m, m) = t.Y * vertex_maps[i] - Eigen::MatrixXd::Identity(m, m);
  }
  return E;
}

Eigen::MatrixXd reduce_conic_rows(const Eigen::MatrixXd& E_raw, const SolverSettings& settings) {
  const int m = static_cast<int>(E_raw.cols());
  // Rows are normalized, so true facet support values are O(1); anything at
  // solver-noise level is treated as dominated. The drop is certified by
  // reduction_certificate in the test suite.
  const double drop_tol = 1e-7;

  // Zero rows and positively scaled duplicates go first; hashing on a
  // normalized, rounded key keeps this linear in the row count.
  std::vector<int> order;
  std::unordered_map<std::string, int> seen;
  std::vector<Eigen::VectorXd> normalized;
  for (int r = 0; r < E_raw.rows(); ++r) {
    double norm = E_raw.row(r).norm();
    if (norm <= 1e-12) continue;
    Eigen::VectorXd unit = E_raw.row(r).transpose() / norm;
    std::string key;
    key.reserve(m * 9);
    for (int j = 0; j < m; ++j) {
      long long q = llround(unit[j] * 1e8);
      key.append(reinterpret_cast<const char*>(&q), sizeof(q));
    }
    auto [it, inserted] = seen.emplace(std::move(key), r);
    if (inserted) {
      order.push_back(r);
      normalized.push_back(std::move(unit));
    }
  }

  const int R = static_cast<int>(order.size());
  std::vector<bool> alive(R, true);
  Eigen::MatrixXd rows_mat(R, m);
  for (int k = 0; k < R; ++k) rows_mat.row(k) = normalized[k].transpose();

  // Sequential greedy scan. The support LP for row r is solved against a
  // working subset of the other retained rows and grown with violated rows
  // until the optimizer is feasible for all of them; dropping early is sound
  // because adding rows can only shrink the feasible cone.
  std::vector<int> confirmed;  // indices into `normalized` kept so far
  for (int r = 0; r < R; ++r) {
    // Fast sound drop test on large inputs: an explicit conic-combination
    // witness over the best-aligned confirmed rows dominates the row without
    // any LP. Misses escalate to the LP path below.
    if (confirmed.size() >= 60) {
      std::vector<std::pair<double, int>> aligned;
      for (int k : confirmed)
        if (k != r && alive[k]) aligned.emplace_back(normalized[k].dot(normalized[r]), k);
      std::sort(aligned.begin(), aligned.end(), std::greater<>());
      const int cols = std::min<int>(static_cast<int>(aligned.size()), 64);
      Eigen::MatrixXd M(m, cols);
      for (int k = 0; k < cols; ++k) M.col(k) = normalized[aligned[k].second];
      Eigen::VectorXd lam, unused;
      if (nonnegative_least_squares(M, Eigen::MatrixXd(m, 0), normalized[r], lam, unused) &&
          (M * lam - normalized[r]).lpNorm<Eigen::Infinity>() <= 1e-9) {
        alive[r] = false;
        continue;
      }
    }
    std::vector<int> working;
    for (int k : confirmed)
      if (k != r && alive[k]) working.push_back(k);
    bool keep = false;
    std::vector<char> in_working(R, 0);
    for (int k : working) in_working[k] = 1;
    for (int round = 0; round < 500; ++round) {
      Eigen::VectorXd ystar;
      double val = cone_support_value(normalized[r], rows_mat, working, settings, &ystar);
      if (val <= drop_tol) break;  // dominated already by a subset
      // The most violated retained row at the maximizer joins the working set.
      Eigen::VectorXd viol = rows_mat * ystar;
      double worst = drop_tol;
      int worst_idx = -1;
      for (int k = 0; k < R; ++k) {
        if (k == r || !alive[k] || in_working[k]) continue;
        if (viol[k] > worst) {
          worst = viol[k];
          worst_idx = k;
        }
      }
      if (worst_idx < 0) {
        keep = true;  // maximizer feasible for every other retained row
        break;
      }
      working.push_back(worst_idx);
      in_working[worst_idx] = 1;
    }
    if (!keep)
      alive[r] = false;
    else
      confirmed.push_back(r);
  }

  std::vector<int> final_rows;
  for (int r = 0; r < R; ++r)
    if (alive[r]) final_rows.push_back(order[r]);
  Eigen::MatrixXd E(final_rows.size(), m);
  for (size_t k = 0; k < final_rows.size(); ++k) E.row(k) = E_raw.row(final_rows[k]);
  return E;
}

bool reduction_certificate(const Eigen::MatrixXd& E_raw, const Eigen::MatrixXd& E_reduced,
                           double tol, const SolverSettings& settings) {
  const int m = static_cast<int>(E_raw.cols());
  std::vector<int> all(E_reduced.rows());
  std::iota(all.begin(), all.end(), 0);
  for (int r = 0; r < E_raw.rows(); ++r) {
    double norm = E_raw.row(r).norm();
    if (norm <= 1e-12) continue;
    Eigen::VectorXd e = E_raw.row(r).transpose() / norm;
    double val = cone_support_value(e, E_reduced, all, settings, nullptr);
    if (val > tol) return false;
  }
  (void)m;
  return true;
}

std::pair<TemplatePolytope, VertexConfiguration> build_template_2d(const std::vector<double>& angles) {
  const int m = static_cast<int>(angles.size());
  if (m < 3) throw AngleSpacingError("2-D template needs at least 3 angles");
  for (int i = 0; i < m; ++i) {
    if (angles[i] < 0.0 || angles[i] >= 2.0 * kPi)
      throw AngleSpacingError("angles must lie in [0, 2*pi)");
    if (i > 0 && angles[i] <= angles[i - 1]) throw AngleSpacingError("angles must be strictly increasing");
  }
  for (int i = 0; i + 1 < m; ++i) {
    if (angles[i + 1] - angles[i] >= kPi)
      throw AngleSpacingError("consecutive angle gap must be below pi");
  }
  if (angles[m - 1] - angles[0] <= kPi)
    throw AngleSpacingError("angle range must exceed pi for boundedness");

  TemplatePolytope t;
  t.Y.resize(m, 2);
  for (int i = 0; i < m; ++i) t.Y.row(i) << std::cos(angles[i]), std::sin(angles[i]);
  t.sigma = Eigen::VectorXd::Ones(m);

  auto wrapped = [&](int i) {  // angle with index beyond m continues around the circle
    if (i < m) return angles[i];
    return angles[i - m] + 2.0 * kPi;
  };
  auto delta = [&](int i) { return -std::sin(wrapped(i + 1) - wrapped(i)); };
  auto sigma_coef = [&](int i) { return std::sin(wrapped(i + 2) - wrapped(i)); };

  VertexConfiguration vc;
  for (int i = 0; i < m; ++i) {
    int j = (i + 1) % m;
    vc.vertex_sets.push_back({std::min(i, j), std::max(i, j)});
    Eigen::Matrix2d YI;
    YI.row(0) = t.Y.row(i);
    YI.row(1) = t.Y.row(j);
    Eigen::Matrix2d Yinv = YI.inverse();
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(2, m);
    V.col(i) = Yinv.col(0);
    V.col(j) = Yinv.col(1);
    vc.vertex_maps.push_back(std::move(V));
  }
  vc.E = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    vc.E(i, i) = delta(i + 1);
    vc.E(i, (i + 1) % m) = sigma_coef(i);
    vc.E(i, (i + 2) % m) = delta(i);
  }
  vc.E_raw = conic_matrix(t, vc.vertex_maps);
  return {std::move(t), std::move(vc)};
}

std::vector<Eigen::VectorXd> vertices_of(const ConfiguredPolytope& cp) {
  if (!cp.tmpl || !cp.config) throw CctmpcError("vertices_of: unbound polytope");
  double cone_tol = 1e-9 * (1.0 + cp.y.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd violation = cp.config->E * cp.y;
  if (violation.size() > 0 && violation.maxCoeff() > cone_tol)
    throw ConfigurationViolatedError("parameter outside the vertex configuration cone (violation " +
                                     std::to_string(violation.maxCoeff()) + ")");
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(cp.config->num_vertices());
  for (const auto& V : cp.config->vertex_maps) pts.push_back(V * cp.y);
  return pts;
}

bool hull_membership(const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& vertices,
                     double tol, const SolverSettings& settings) {
  if (vertices.empty()) throw CctmpcError("hull_membership: empty vertex list");
  const int n = static_cast<int>(x.size());
  const int k = static_cast<int>(vertices.size());
  // min s  s.t.  |sum theta_i v_i - x| <= s componentwise, theta in simplex
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(k + 1);
  lp.c[k] = 1.0;
  Eigen::MatrixXd Gd(2 * n, k + 1);
  Eigen::VectorXd h(2 * n);
  for (int j = 0; j < k; ++j) {
    Gd.block(0, j, n, 1) = vertices[j];
    Gd.block(n, j, n, 1) = -vertices[j];
  }
  Gd.block(0, k, 2 * n, 1).setConstant(-1.0);
  h.head(n) = x;
  h.tail(n) = -x;
  lp.G = Gd.sparseView();
  lp.h = h;
  Eigen::MatrixXd Ad(1, k + 1);
  Ad.setOnes();
  Ad(0, k) = 0.0;
  lp.A = Ad.sparseView();
  lp.b = Eigen::VectorXd::Ones(1);
  lp.lb = Eigen::VectorXd::Zero(k + 1);
  SolveResult res = solve_lp(lp, settings);
  if (!res.optimal()) throw CctmpcError("hull_membership: LP " + to_string(res.status));
  return res.objective <= tol;
}

Eigen::VectorXd support_parameter(const TemplatePolytope& t,
                                  const std::vector<Eigen::VectorXd>& vertices) {
  if (vertices.empty()) throw CctmpcError("support_parameter: empty vertex list");
  Eigen::VectorXd y(t.num_rows());
  for (int i = 0; i < t.num_rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices) best = std::max(best, t.Y.row(i).dot(v));
    y[i] = best;
  }
  return y;
}

std::vector<Eigen::VectorXd> sample_configuration_parameters(const TemplatePolytope& t,
                                                             const VertexConfiguration& vc,
                                                             int count, std::uint64_t seed,
                                                             const SolverSettings& settings) {
  const int m = t.num_rows();
  CounterRng rng(seed);
  Eigen::VectorXd anchor = t.sigma / (1.0 + t.sigma.lpNorm<Eigen::Infinity>());
  std::vector<Eigen::VectorXd> extremes;
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  std::vector<int> all_rows(vc.E.rows());
  std::iota(all_rows.begin(), all_rows.end(), 0);
  while (static_cast<int>(out.size()) < count) {
    Eigen::VectorXd dir(m);
    for (int i = 0; i < m; ++i) dir[i] = 2.0 * rng.next_double() - 1.0;
    if (dir.norm() < 1e-9) continue;
    Eigen::VectorXd extreme;
    cone_support_value(dir / dir.norm(), vc.E, all_rows, settings, &extreme);
    extremes.push_back(extreme);
    // Random conic mixture of extreme sections plus a pull toward the seed,
    // keeping the sample inside the cone by convexity.
    Eigen::VectorXd y = rng.uniform(0.05, 1.0) * anchor;
    y += rng.uniform(0.0, 1.5) * extreme;
    if (extremes.size() > 1) {
      const Eigen::VectorXd& other = extremes[rng.next_below(extremes.size())];
      y += rng.uniform(0.0, 1.0) * other;
    }
    out.push_back(y);
  }
  return out;
}

}  // namespace cctmpc
