#include "cctmpc/synthesis.hpp"

#include <cmath>
#include <sstream>

#include "cctmpc/rng.hpp"

namespace cctmpc {

namespace {

void check_pd(const Eigen::MatrixXd& M, const char* name) {
  if (M.rows() != M.cols()) throw NotPositiveDefiniteError(std::string(name) + " is not square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw NotPositiveDefiniteError(std::string(name) + " is not positive definite");
}

}  // namespace

StageCost StageCost::vertex_form(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                                 const Eigen::MatrixXd& S, const Eigen::MatrixXd& T,
                                 const VertexConfiguration& vc) {
  check_pd(Q, "Q");
  check_pd(R, "R");
  check_pd(S, "S");
  check_pd(T, "T");
  const int mbar = vc.num_vertices();
  if (mbar == 0) throw CctmpcError("stage cost: empty vertex configuration");
  const int m = static_cast<int>(vc.vertex_maps[0].cols());
  const int nu = static_cast<int>(R.rows());

  Eigen::MatrixXd Vbar = Eigen::MatrixXd::Zero(vc.vertex_maps[0].rows(), m);
  for (const auto& V : vc.vertex_maps) Vbar += V;
  Vbar /= mbar;

  StageCost cost;
  cost.Wy = Vbar.transpose() * Q * Vbar;
  for (const auto& V : vc.vertex_maps) {
    Eigen::MatrixXd D = V - Vbar;
    cost.Wy += D.transpose() * S * D;
  }

  // Ubar u averages the stacked vertex inputs; J_i selects u_i.
  Eigen::MatrixXd Ubar = Eigen::MatrixXd::Zero(nu, mbar * nu);
  for (int i = 0; i < mbar; ++i)
    Ubar.block(0, i * nu, nu, nu) = Eigen::MatrixXd::Identity(nu, nu) / mbar;
  cost.Wu = Ubar.transpose() * R * Ubar;
  for (int i = 0; i < mbar; ++i) {
    Eigen::MatrixXd D = -Ubar;
    D.block(0, i * nu, nu, nu) += Eigen::MatrixXd::Identity(nu, nu);
    cost.Wu += D.transpose() * T * D;
  }
  return cost;
}

StageCost StageCost::parameter_form(const Eigen::MatrixXd& P, int input_block_size) {
  StageCost cost;
  cost.Wy = 0.5 * (P + P.transpose());
  cost.Wu = Eigen::MatrixXd::Zero(input_block_size, input_block_size);
  return cost;
}

FMembershipBlock::FMembershipBlock(const TemplatePolytope& t, const VertexConfiguration& vc,
                                   const UncertainSystem& sys, const Eigen::VectorXd& w_bar)
    : t_(&t), vc_(&vc), sys_(&sys), w_bar_(w_bar) {
  if (w_bar.size() != t.num_rows()) throw CctmpcError("membership block: w_bar length mismatch");
  if (sys.state_dim() != t.dim()) throw CctmpcError("membership block: state dimension mismatch");
  const int l = sys.num_models();
  YAV_.resize(l);
  YB_.resize(l);
  for (int j = 0; j < l; ++j) {
    Eigen::MatrixXd YA = t.Y * sys.A_vertices[j];
    YAV_[j].reserve(vc.num_vertices());
    for (const auto& V : vc.vertex_maps) YAV_[j].push_back(YA * V);
    YB_[j] = t.Y * sys.B_vertices[j];
  }
}

int FMembershipBlock::row_count(bool successor_state_rows) const {
  const int m = t_->num_rows();
  const int mbar = vc_->num_vertices();
  const int l = sys_->num_models();
  const int mE = static_cast<int>(vc_->E.rows());
  int rows = m * mbar * l + 2 * mE + mbar * (sys_->U.num_rows() + sys_->X.num_rows());
  if (successor_state_rows) rows += mbar * sys_->X.num_rows();
  return rows;
}

void FMembershipBlock::append(std::vector<Eigen::Triplet<double>>& trip, std::vector<double>& rhs,
                              int row_offset, int y_offset, int u_offset, int yplus_offset,
                              bool successor_state_rows) const {
  const int m = t_->num_rows();
  const int mbar = vc_->num_vertices();
  const int l = sys_->num_models();
  const int nu = sys_->input_dim();
  const Eigen::MatrixXd& E = vc_->E;
  int row = row_offset;

  auto emit_dense = [&trip](int r0, int c0, const Eigen::MatrixXd& M) {
    for (int r = 0; r < M.rows(); ++r)
      for (int c = 0; c < M.cols(); ++c)
        if (M(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, M(r, c));
  };

  // tube propagation rows, per vertex and model
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      emit_dense(row, y_offset, YAV_[j][i]);
      emit_dense(row, u_offset + i * nu, YB_[j]);
      for (int r = 0; r < m; ++r) trip.emplace_back(row + r, yplus_offset + r, -1.0);
      for (int r = 0; r < m; ++r) rhs.push_back(-w_bar_[r]);
      row += m;
    }
  }
  // cone membership of both parameters
  emit_dense(row, y_offset, E);
  for (int r = 0; r < E.rows(); ++r) rhs.push_back(0.0);
  row += static_cast<int>(E.rows());
  emit_dense(row, yplus_offset, E);
  for (int r = 0; r < E.rows(); ++r) rhs.push_back(0.0);
  row += static_cast<int>(E.rows());
  // input constraints
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, u_offset + i * nu, sys_->U.H);
    for (int r = 0; r < sys_->U.num_rows(); ++r) rhs.push_back(sys_->U.h[r]);
    row += sys_->U.num_rows();
  }
  // state constraints at the current vertices
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, y_offset, sys_->X.H * vc_->vertex_maps[i]);
    for (int r = 0; r < sys_->X.num_rows(); ++r) rhs.push_back(sys_->X.h[r]);
    row += sys_->X.num_rows();
  }
  if (successor_state_rows) {
    for (int i = 0; i < mbar; ++i) {
      emit_dense(row, yplus_offset, sys_->X.H * vc_->vertex_maps[i]);
      for (int r = 0; r < sys_->X.num_rows(); ++r) rhs.push_back(sys_->X.h[r]);
      row += sys_->X.num_rows();
    }
  }
}

bool f_membership_feasible(const FMembershipBlock& block, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& yplus, const SolverSettings& settings,
                           Eigen::VectorXd* inputs) {
  const int m = block.tmpl().num_rows();
  const int mbar = block.config().num_vertices();
  const int nu = block.system().input_dim();
  const int nuu = mbar * nu;

  // Assemble the block over (y, u, y+), then freeze y and y+ by moving their
  // columns to the right-hand side and minimize the worst violation.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  block.append(trip, rhs, 0, 0, m, m + nuu);
  const int rows = block.row_count();
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(rows);
  std::vector<Eigen::Triplet<double>> utrip;
  for (const auto& tr : trip) {
    if (tr.col() < m)
      shift[tr.row()] += tr.value() * y[tr.col()];
    else if (tr.col() >= m + nuu)
      shift[tr.row()] += tr.value() * yplus[tr.col() - m - nuu];
    else
      utrip.emplace_back(tr.row(), tr.col() - m + 0, tr.value());
  }
  // variables: (u, s); minimize s subject to rows <= rhs - shift + s
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(nuu + 1);
  lp.c[nuu] = 1.0;
  for (auto& tr : utrip) tr = Eigen::Triplet<double>(tr.row(), tr.col(), tr.value());
  utrip.reserve(utrip.size() + rows);
  for (int r = 0; r < rows; ++r) utrip.emplace_back(r, nuu, -1.0);
  lp.G.resize(rows, nuu + 1);
  lp.G.setFromTriplets(utrip.begin(), utrip.end());
  lp.h.resize(rows);
  for (int r = 0; r < rows; ++r) lp.h[r] = rhs[r] - shift[r];
  lp.A.resize(0, nuu + 1);
  lp.b.resize(0);
  lp.lb = Eigen::VectorXd::Constant(nuu + 1, -std::numeric_limits<double>::infinity());
  lp.lb[nuu] = 0.0;
  SolveResult res = solve_lp(lp, settings);
  if (!res.optimal()) throw CctmpcError("membership feasibility LP " + to_string(res.status));
  double tol = 1e-8 * (1.0 + std::max(y.lpNorm<Eigen::Infinity>(), yplus.lpNorm<Eigen::Infinity>()));
  if (res.objective > tol) return false;
  if (inputs) *inputs = res.z.head(nuu);
  return true;
}

namespace {

// Contraction rows at fixed y: feasibility and min-norm inputs.
std::optional<Eigen::VectorXd> contraction_inputs(const FMembershipBlock& block,
                                                  const Eigen::VectorXd& y, double beta,
                                                  const SolverSettings& settings) {
  const auto& sys = block.system();
  const auto& vc = block.config();
  const int m = block.tmpl().num_rows();
  const int mbar = vc.num_vertices();
  const int l = sys.num_models();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      Eigen::VectorXd lhs_y = block.tube_map(j, i) * y - beta * y;
      const Eigen::MatrixXd& YB = block.input_map(j);
      for (int r = 0; r < m; ++r) {
        for (int ccol = 0; ccol < nu; ++ccol)
          if (YB(r, ccol) != 0.0) trip.emplace_back(row + r, i * nu + ccol, YB(r, ccol));
        rhs.push_back(-block.w_bar()[r] - lhs_y[r]);
      }
      row += m;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    for (int r = 0; r < sys.U.num_rows(); ++r) {
      for (int ccol = 0; ccol < nu; ++ccol)
        if (sys.U.H(r, ccol) != 0.0) trip.emplace_back(row, i * nu + ccol, sys.U.H(r, ccol));
      rhs.push_back(sys.U.h[r]);
      ++row;
    }
  }

  QuadraticProgram qp;
  qp.H.resize(nuu, nuu);
  qp.H.setIdentity();
  qp.H *= 2.0;
  qp.c = Eigen::VectorXd::Zero(nuu);
  qp.G.resize(row, nuu);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  qp.A.resize(0, nuu);
  qp.b.resize(0);
  SolveResult res = solve_qp(qp, settings);
  // A certification attempt: borderline problems may also come back as
  // numerical failures, which simply means no certificate at this beta.
  if (!res.optimal()) return std::nullopt;
  return res.z;
}

}  // namespace

namespace {

ContractiveSynthesis synthesize_contractive_impl(const TemplatePolytope& t,
                                                 const VertexConfiguration& vc,
                                                 const UncertainSystem& sys,
                                                 const Eigen::VectorXd& w_bar, double beta,
                                                 const Eigen::VectorXd& lower_bound,
                                                 const SolverSettings& settings) {
  if (!(beta > 0.0 && beta < 1.0)) throw CctmpcError("beta must lie in (0, 1)");
  FMembershipBlock block(t, vc, sys, w_bar);
  const int m = t.num_rows();
  const int mbar = vc.num_vertices();
  const int l = sys.num_models();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;

  // variables z = (y, u); contraction rows have successor beta*y
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  auto emit_dense = [&trip](int r0, int c0, const Eigen::MatrixXd& M) {
    for (int r = 0; r < M.rows(); ++r)
      for (int c = 0; c < M.cols(); ++c)
        if (M(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, M(r, c));
  };
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      Eigen::MatrixXd tube = block.tube_map(j, i) - beta * Eigen::MatrixXd::Identity(m, m);
      emit_dense(row, 0, tube);
      emit_dense(row, m + i * nu, block.input_map(j));
      for (int r = 0; r < m; ++r) rhs.push_back(-w_bar[r]);
      row += m;
    }
  }
  emit_dense(row, 0, vc.E);
  for (int r = 0; r < vc.E.rows(); ++r) rhs.push_back(0.0);
  row += static_cast<int>(vc.E.rows());
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, m + i * nu, sys.U.H);
    for (int r = 0; r < sys.U.num_rows(); ++r) rhs.push_back(sys.U.h[r]);
    row += sys.U.num_rows();
  }
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, 0, sys.X.H * vc.vertex_maps[i]);
    for (int r = 0; r < sys.X.num_rows(); ++r) rhs.push_back(sys.X.h[r]);
    row += sys.X.num_rows();
  }
  if (lower_bound.size() == m) {  // anchoring: y >= lower_bound
    for (int r = 0; r < m; ++r) {
      trip.emplace_back(row, r, -1.0);
      rhs.push_back(-lower_bound[r]);
      ++row;
    }
  }

  QuadraticProgram qp;
  std::vector<Eigen::Triplet<double>> ht;
  for (int i = 0; i < m; ++i) ht.emplace_back(i, i, 2e-6);
  for (int i = 0; i < nuu; ++i) ht.emplace_back(m + i, m + i, 2.0);
  qp.H.resize(m + nuu, m + nuu);
  qp.H.setFromTriplets(ht.begin(), ht.end());
  qp.c = Eigen::VectorXd::Zero(m + nuu);
  qp.G.resize(row, m + nuu);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  qp.A.resize(0, m + nuu);
  qp.b.resize(0);

  SolveResult res = solve_qp(qp, settings);
  ContractiveSynthesis out;
  if (res.status == SolveStatus::Infeasible) return out;
  if (!res.optimal()) throw CctmpcError("contraction synthesis QP " + to_string(res.status));

  Eigen::VectorXd y_base = res.z.head(m);
  Eigen::VectorXd u_star = res.z.tail(nuu);

  // Entirely-simple re-check. A degenerate optimizer (collapsed vertices)
  // is pulled slightly toward the seed parameter, which sits strictly inside
  // the configuration cone and has all vertices separated, then the
  // certifying inputs are recomputed. Mirrors the offline procedure that
  // tolerates a small perturbation at the cost of a marginally larger beta.
  CounterRng rng(0x5eedULL);
  Eigen::VectorXd interior = t.sigma * (y_base.lpNorm<Eigen::Infinity>() /
                                        (t.sigma.lpNorm<Eigen::Infinity>() + 1e-300));
  const double eps_ladder[] = {0.0, 1e-6, 1e-7, 1e-5, 1e-8, 1e-4};
  for (double eps : eps_ladder) {
    Eigen::VectorXd y_star = y_base + eps * (interior - y_base);
    if (eps > 0.0) {
      double noise = 0.01 * eps * (1.0 + y_base.lpNorm<Eigen::Infinity>());
      for (int i = 0; i < m; ++i) y_star[i] += noise * (2.0 * rng.next_double() - 1.0);
    }
    double cone_tol = 1e-9 * (1.0 + y_star.lpNorm<Eigen::Infinity>());
    if (vc.E.rows() > 0 && (vc.E * y_star).maxCoeff() > cone_tol) continue;
    bool state_ok = true;
    for (int i = 0; i < mbar && state_ok; ++i)
      state_ok = sys.X.contains(vc.vertex_maps[i] * y_star, cone_tol);
    if (!state_ok) continue;
    TemplatePolytope cand{t.Y, y_star};
    SimplicityReport rep = check_entirely_simple(cand);
    if (!rep.entirely_simple || rep.num_vertices != mbar) continue;
    if (eps == 0.0) {
      out.feasible = true;
      out.sigma = y_star;
      out.u = u_star;
      out.beta_used = beta;
      return out;
    }
    // The optimizer sat on the contraction boundary, so the nudged point
    // needs a marginally larger beta for its certificate.
    for (double relax : {0.0, 1e-4, 1e-2}) {
      double beta_try = beta + relax * (1.0 - beta);
      auto u_fix = contraction_inputs(block, y_star, beta_try, settings);
      if (u_fix) {
        out.feasible = true;
        out.sigma = y_star;
        out.u = *u_fix;
        out.beta_used = beta_try;
        return out;
      }
    }
  }
  throw NotEntirelySimpleError(
      "contractive parameter is degenerate and perturbation retries were exhausted", {});
}

}  // namespace

ContractiveSynthesis synthesize_contractive(const TemplatePolytope& t, const VertexConfiguration& vc,
                                            const UncertainSystem& sys, const Eigen::VectorXd& w_bar,
                                            double beta, const SolverSettings& settings) {
  return synthesize_contractive_impl(t, vc, sys, w_bar, beta, Eigen::VectorXd(0), settings);
}

CostToTravel cost_to_travel(const FMembershipBlock& block, const StageCost& cost,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& yplus,
                            const SolverSettings& settings) {
  const auto& sys = block.system();
  const auto& vc = block.config();
  const int m = block.tmpl().num_rows();
  const int mbar = vc.num_vertices();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;

  CostToTravel out;
  // Parameter-only rows are checked upfront; the QP then only carries u.
  double tol = 1e-8 * (1.0 + std::max(y.lpNorm<Eigen::Infinity>(), yplus.lpNorm<Eigen::Infinity>()));
  if (vc.E.rows() > 0 &&
      ((vc.E * y).maxCoeff() > tol || (vc.E * yplus).maxCoeff() > tol))
    return out;
  for (int i = 0; i < mbar; ++i) {
    if (!sys.X.contains(vc.vertex_maps[i] * y, tol) || !sys.X.contains(vc.vertex_maps[i] * yplus, tol))
      return out;
  }

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  const int l = sys.num_models();
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      Eigen::VectorXd shift = yplus - block.tube_map(j, i) * y - block.w_bar();
      const Eigen::MatrixXd& YB = block.input_map(j);
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < nu; ++c)
          if (YB(r, c) != 0.0) trip.emplace_back(row + r, i * nu + c, YB(r, c));
        rhs.push_back(shift[r]);
      }
      row += m;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    for (int r = 0; r < sys.U.num_rows(); ++r) {
      for (int c = 0; c < nu; ++c)
        if (sys.U.H(r, c) != 0.0) trip.emplace_back(row, i * nu + c, sys.U.H(r, c));
      rhs.push_back(sys.U.h[r]);
      ++row;
    }
  }

  QuadraticProgram qp;
  Eigen::MatrixXd Hu = 2.0 * cost.Wu;
  qp.H = Hu.sparseView();
  if (qp.H.rows() == 0) qp.H.resize(nuu, nuu);
  qp.c = Eigen::VectorXd::Zero(nuu);
  qp.G.resize(row, nuu);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  qp.A.resize(0, nuu);
  qp.b.resize(0);
  SolveResult res = solve_qp(qp, settings);
  if (res.status == SolveStatus::Infeasible) return out;
  if (!res.optimal()) throw CctmpcError("cost-to-travel QP " + to_string(res.status));
  out.feasible = true;
  out.inputs = res.z;
  out.value = cost.evaluate(y, res.z);
  return out;
}

SteadyState solve_steady(const FMembershipBlock& block, const StageCost& cost,
                         const SolverSettings& settings) {
  const auto& sys = block.system();
  const int m = block.tmpl().num_rows();
  const int mbar = block.config().num_vertices();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;
  const int nvars = 2 * m + nuu;  // (y, y+, u)

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  block.append(trip, rhs, 0, 0, 2 * m, m, /*successor_state_rows=*/true);
  const int rows = block.row_count(true);

  QuadraticProgram qp;
  std::vector<Eigen::Triplet<double>> ht;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (cost.Wy(r, c) != 0.0) ht.emplace_back(r, c, 2.0 * cost.Wy(r, c));
  for (int r = 0; r < nuu; ++r)
    for (int c = 0; c < nuu; ++c)
      if (cost.Wu(r, c) != 0.0) ht.emplace_back(2 * m + r, 2 * m + c, 2.0 * cost.Wu(r, c));
  // Costs that are flat in some inputs (pure parameter costs) leave the
  // optimizer on a degenerate face; the same 1e-8 Tikhonov term the online
  // QP carries restores a unique, well-conditioned solution without moving
  // the answer beyond reporting tolerance.
  for (int r = 0; r < nvars; ++r) ht.emplace_back(r, r, 2e-8);
  qp.H.resize(nvars, nvars);
  qp.H.setFromTriplets(ht.begin(), ht.end());
  qp.c = Eigen::VectorXd::Zero(nvars);
  qp.G.resize(rows, nvars);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  // equality block y - y+ = 0, dual lambda
  std::vector<Eigen::Triplet<double>> at;
  for (int r = 0; r < m; ++r) {
    at.emplace_back(r, r, 1.0);
    at.emplace_back(r, m + r, -1.0);
  }
  qp.A.resize(m, nvars);
  qp.A.setFromTriplets(at.begin(), at.end());
  qp.b = Eigen::VectorXd::Zero(m);

  SolveResult res = solve_qp(qp, settings);
  if (res.status == SolveStatus::Infeasible)
    throw CctmpcError("steady problem infeasible although a contractive seed exists");
  if (!res.optimal()) throw CctmpcError("steady QP " + to_string(res.status));

  SteadyState out;
  out.y_s = res.z.head(m);
  out.u_s = res.z.tail(nuu);
  out.lambda = res.nu;
  out.V_s = cost.evaluate(out.y_s, out.u_s);
  // at a stationary point the Lagrangian dual value collapses to
  // -1/2 z'Hz - h'mu - b'nu; the gap certifies strong duality
  double quad = 0.5 * res.z.dot(qp.H * res.z);
  double dual_value = -quad - qp.h.dot(res.mu);
  out.duality_gap = std::abs(res.objective - dual_value);
  return out;
}

double contraction_gamma(const Eigen::VectorXd& sigma, const Eigen::VectorXd& y_s, double beta) {
  const double tol = 1e-12 * (1.0 + sigma.lpNorm<Eigen::Infinity>());
  double gamma = 0.0;
  for (int i = 0; i < sigma.size(); ++i) {
    double denom = sigma[i] - y_s[i];
    double numer = beta * sigma[i] - y_s[i];
    if (denom > tol) {
      gamma = std::max(gamma, std::max(0.0, numer / denom));
    } else if (numer > tol) {
      throw DegenerateIndexError("row " + std::to_string(i + 1) +
                                 ": sigma equals y_s but beta*sigma exceeds y_s");
    }
  }
  if (gamma >= 1.0)
    throw GammaNotContractiveError("contraction constant " + std::to_string(gamma) + " is not < 1");
  return gamma;
}

double lipschitz_bound(const StageCost& cost, const Eigen::VectorXd& sigma,
                       const Eigen::VectorXd& u_sigma, const Eigen::VectorXd& y_s,
                       const Eigen::VectorXd& u_s) {
  return std::max(cost.gradient(sigma, u_sigma).norm(), cost.gradient(y_s, u_s).norm());
}

double compute_rho(double lbar, const Eigen::VectorXd& sigma, const Eigen::VectorXd& u_sigma,
                   const Eigen::VectorXd& y_s, const Eigen::VectorXd& u_s,
                   const Eigen::VectorXd& lambda, double gamma) {
  Eigen::VectorXd diff(sigma.size() + u_sigma.size());
  diff.head(sigma.size()) = sigma - y_s;
  diff.tail(u_sigma.size()) = u_sigma - u_s;
  return lbar * diff.norm() + (1.0 - gamma) * std::abs(lambda.dot(sigma - y_s));
}

SynthesisData run_synthesis(const FMembershipBlock& block, const StageCost& cost,
                            const SynthesisOptions& options) {
  const auto& t = block.tmpl();
  const auto& vc = block.config();
  const auto& sys = block.system();

  ContractiveSynthesis contractive =
      synthesize_contractive(t, vc, sys, block.w_bar(), options.beta, options.solver);
  if (!contractive.feasible)
    throw CctmpcError("contraction synthesis infeasible: the template needs more rows");

  SteadyState steady = solve_steady(block, cost, options.solver);

  Eigen::VectorXd sigma = contractive.sigma;
  double beta_used = contractive.beta_used;
  double tol = 1e-9 * (1.0 + sigma.lpNorm<Eigen::Infinity>());
  if ((steady.y_s - sigma).maxCoeff() > tol) {
    // Anchor the contraction problem from below so the seed polytope
    // dominates the steady one, then retry once.
    ContractiveSynthesis retry = synthesize_contractive_impl(
        t, vc, sys, block.w_bar(), options.beta, steady.y_s, options.solver);
    if (!retry.feasible)
      throw CctmpcError("sigma-anchored contraction synthesis infeasible");
    sigma = retry.sigma;
    beta_used = retry.beta_used;
    if ((steady.y_s - sigma).maxCoeff() > tol)
      throw CctmpcError("steady parameter still exceeds the contractive seed after anchoring");
  }

  CostToTravel at_sigma = cost_to_travel(block, cost, sigma, sigma, options.solver);
  if (!at_sigma.feasible) throw CctmpcError("cost-to-travel at the seed is infeasible");
  // Refine the steady pair through the one-step evaluator so V_s matches the
  // cost-to-travel value the rotated cost uses online; the joint solve's
  // input block can sit a solver tolerance above the conditional optimum,
  // which would otherwise bias every rotated-cost evaluation negative.
  CostToTravel at_steady = cost_to_travel(block, cost, steady.y_s, steady.y_s, options.solver);
  if (!at_steady.feasible) throw CctmpcError("cost-to-travel at the steady parameter is infeasible");

  SynthesisData data;
  data.sigma = sigma;
  data.beta = beta_used;
  data.y_s = steady.y_s;
  data.u_s = at_steady.inputs;
  data.lambda = steady.lambda;
  data.V_s = at_steady.value;
  data.u_sigma = at_sigma.inputs;
  data.gamma = contraction_gamma(sigma, steady.y_s, beta_used);
  data.lipschitz = lipschitz_bound(cost, sigma, data.u_sigma, steady.y_s, steady.u_s);
  data.rho = compute_rho(data.lipschitz, sigma, data.u_sigma, steady.y_s, steady.u_s,
                         steady.lambda, data.gamma);
  return data;
}

}  // namespace cctmpc
