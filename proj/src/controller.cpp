#include "cctmpc/controller.hpp"

#include <cmath>

namespace cctmpc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTikhonov = 1e-8;
}

CctmpcController::CctmpcController(const FMembershipBlock& block, const StageCost& cost,
                                   const SynthesisData& synth, ControllerConfig config)
    : block_(&block), cost_(&cost), synth_(synth), config_(std::move(config)) {
  if (config_.horizon < 1) throw CctmpcError("controller horizon must be >= 1");
  if (synth_.gamma >= 1.0) throw CctmpcError("synthesis data carries a non-contractive gamma");
  alpha_cost_coef_ =
      synth_.rho / (1.0 - synth_.gamma) - synth_.lambda.dot(synth_.sigma - synth_.y_s);
}

int CctmpcController::offset_y(int k) const {
  const int m = block_->tmpl().num_rows();
  const int nuu = block_->config().num_vertices() * block_->system().input_dim();
  return k * (m + nuu);
}

int CctmpcController::offset_u(int k) const {
  return offset_y(k) + block_->tmpl().num_rows();
}

int CctmpcController::offset_u_terminal() const {
  return offset_y(config_.horizon) + block_->tmpl().num_rows();
}

int CctmpcController::offset_alpha() const {
  const int nuu = block_->config().num_vertices() * block_->system().input_dim();
  return offset_u_terminal() + nuu;
}

int CctmpcController::num_variables() const { return offset_alpha() + 1; }

MpcRowLayout CctmpcController::row_layout() const {
  const auto& sys = block_->system();
  const int m = block_->tmpl().num_rows();
  const int mbar = block_->config().num_vertices();
  const int l = sys.num_models();
  const int mE = static_cast<int>(block_->config().E.rows());
  const int N = config_.horizon;
  MpcRowLayout lay;
  lay.stage_tube_rows = m * mbar * l * N;
  lay.stage_cone_rows = mE * N;
  lay.stage_input_rows = mbar * sys.U.num_rows() * N;
  lay.stage_state_rows = mbar * sys.X.num_rows() * N;
  lay.initial_rows = m;
  lay.terminal_rows = m * mbar * l + mE + 2 * mbar * sys.X.num_rows() +
                      mbar * sys.U.num_rows() + 2;
  return lay;
}

double CctmpcController::objective_constant() const {
  return -synth_.lambda.dot(synth_.y_s) - synth_.V_s;
}

QuadraticProgram CctmpcController::assemble_qp(const Eigen::VectorXd& x) const {
  const auto& sys = block_->system();
  const auto& vc = block_->config();
  const auto& t = block_->tmpl();
  const int m = t.num_rows();
  const int mbar = vc.num_vertices();
  const int l = sys.num_models();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;
  const int N = config_.horizon;
  const int nv = num_variables();
  if (x.size() != t.dim()) throw CctmpcError("mpc: state dimension mismatch");

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  trip.reserve(static_cast<size_t>(row_layout().total()) * 8);
  auto emit_dense = [&trip](int r0, int c0, const Eigen::MatrixXd& M) {
    for (int r = 0; r < M.rows(); ++r)
      for (int c = 0; c < M.cols(); ++c)
        if (M(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, M(r, c));
  };

  int row = 0;
  for (int k = 0; k < N; ++k) {
    const int oy = offset_y(k);
    const int ou = offset_u(k);
    const int oyn = offset_y(k + 1);
    for (int i = 0; i < mbar; ++i) {
      for (int j = 0; j < l; ++j) {
        emit_dense(row, oy, block_->tube_map(j, i));
        emit_dense(row, ou + i * nu, block_->input_map(j));
        for (int r = 0; r < m; ++r) trip.emplace_back(row + r, oyn + r, -1.0);
        for (int r = 0; r < m; ++r) rhs.push_back(-block_->w_bar()[r]);
        row += m;
      }
    }
    emit_dense(row, oy, vc.E);
    for (int r = 0; r < vc.E.rows(); ++r) rhs.push_back(0.0);
    row += static_cast<int>(vc.E.rows());
    for (int i = 0; i < mbar; ++i) {
      emit_dense(row, ou + i * nu, sys.U.H);
      for (int r = 0; r < sys.U.num_rows(); ++r) rhs.push_back(sys.U.h[r]);
      row += sys.U.num_rows();
    }
    for (int i = 0; i < mbar; ++i) {
      emit_dense(row, oy, sys.X.H * vc.vertex_maps[i]);
      for (int r = 0; r < sys.X.num_rows(); ++r) rhs.push_back(sys.X.h[r]);
      row += sys.X.num_rows();
    }
  }

  // initial enclosure Y x <= y_0
  Eigen::VectorXd Yx = t.Y * x;
  for (int r = 0; r < m; ++r) {
    trip.emplace_back(row, offset_y(0) + r, -1.0);
    rhs.push_back(-Yx[r]);
    ++row;
  }

  // terminal block: tube rows from (y_N, u_hat) to y_s + alpha (sigma - y_s)
  const int oyN = offset_y(N);
  const int ouh = offset_u_terminal();
  const int oa = offset_alpha();
  const Eigen::VectorXd dir = synth_.sigma - synth_.y_s;
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      emit_dense(row, oyN, block_->tube_map(j, i));
      emit_dense(row, ouh + i * nu, block_->input_map(j));
      for (int r = 0; r < m; ++r) {
        if (dir[r] != 0.0) trip.emplace_back(row + r, oa, -dir[r]);
        rhs.push_back(synth_.y_s[r] - block_->w_bar()[r]);
      }
      row += m;
    }
  }
  emit_dense(row, oyN, vc.E);
  for (int r = 0; r < vc.E.rows(); ++r) rhs.push_back(0.0);
  row += static_cast<int>(vc.E.rows());
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, oyN, sys.X.H * vc.vertex_maps[i]);
    for (int r = 0; r < sys.X.num_rows(); ++r) rhs.push_back(sys.X.h[r]);
    row += sys.X.num_rows();
  }
  for (int i = 0; i < mbar; ++i) {
    // state constraint along the homothetic segment, linear in alpha
    Eigen::VectorXd seg = sys.X.H * (vc.vertex_maps[i] * dir);
    Eigen::VectorXd base = sys.X.H * (vc.vertex_maps[i] * synth_.y_s);
    for (int r = 0; r < sys.X.num_rows(); ++r) {
      if (seg[r] != 0.0) trip.emplace_back(row, oa, seg[r]);
      rhs.push_back(sys.X.h[r] - base[r]);
      ++row;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, ouh + i * nu, sys.U.H);
    for (int r = 0; r < sys.U.num_rows(); ++r) rhs.push_back(sys.U.h[r]);
    row += sys.U.num_rows();
  }
  trip.emplace_back(row, oa, 1.0);
  rhs.push_back(1.0);
  ++row;
  trip.emplace_back(row, oa, -1.0);
  rhs.push_back(0.0);
  ++row;

  QuadraticProgram qp;
  qp.G.resize(row, nv);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());

  std::vector<Eigen::Triplet<double>> ht;
  auto emit_sym = [&ht](int off, const Eigen::MatrixXd& W) {
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c)
        if (W(r, c) != 0.0) ht.emplace_back(off + r, off + c, 2.0 * W(r, c));
  };
  for (int k = 0; k < N; ++k) {
    emit_sym(offset_y(k), cost_->Wy);
    emit_sym(offset_u(k), cost_->Wu);
  }
  emit_sym(oyN, cost_->Wy);
  emit_sym(ouh, cost_->Wu);
  for (int i = 0; i < nv; ++i) ht.emplace_back(i, i, 2.0 * kTikhonov);
  qp.H.resize(nv, nv);
  qp.H.setFromTriplets(ht.begin(), ht.end());

  qp.c = Eigen::VectorXd::Zero(nv);
  qp.c.segment(offset_y(0), m) = synth_.lambda;
  qp.c[oa] = alpha_cost_coef_;
  qp.A.resize(0, nv);
  qp.b.resize(0);
  return qp;
}

TubeSolution CctmpcController::mpc_step(const Eigen::VectorXd& x) {
  QuadraticProgram qp = assemble_qp(x);
  SolverSettings settings = config_.solver;
  // The objective carries an O(N V_s) baseline, so a relative gap at the
  // configured tolerance would leave visible noise in the tube parameters;
  // two extra digits on the step QP keep the Lyapunov telescope clean.
  settings.comp_tol *= 1e-2;
  settings.stat_tol *= 1e-1;
  if (warm_start_ && warm_start_->size() == qp.num_vars()) settings.primal_hint = warm_start_;
  SolveResult res = solve_qp(qp, settings);
  if (res.status == SolveStatus::NumericalFailure) {
    settings = config_.solver;
    if (warm_start_ && warm_start_->size() == qp.num_vars()) settings.primal_hint = warm_start_;
    res = solve_qp(qp, settings);
  }
  if (res.status == SolveStatus::Infeasible)
    throw InfeasibleStateError("state outside the controller's feasible domain");
  if (!res.optimal()) throw CctmpcError("mpc step QP " + to_string(res.status));

  const int m = block_->tmpl().num_rows();
  const int nuu = block_->config().num_vertices() * block_->system().input_dim();
  const int N = config_.horizon;
  TubeSolution sol;
  sol.y.reserve(N + 1);
  for (int k = 0; k <= N; ++k) sol.y.push_back(res.z.segment(offset_y(k), m));
  sol.u.reserve(N);
  for (int k = 0; k < N; ++k) sol.u.push_back(res.z.segment(offset_u(k), nuu));
  sol.u_terminal = res.z.segment(offset_u_terminal(), nuu);
  sol.alpha = res.z[offset_alpha()];
  sol.objective = res.objective + objective_constant();

  double enclosure = (block_->tmpl().Y * x - sol.y[0]).maxCoeff();
  if (enclosure > 10.0 * config_.solver.feas_tol * (1.0 + sol.y[0].lpNorm<Eigen::Infinity>()))
    throw CctmpcError("mpc step violated the initial enclosure by " + std::to_string(enclosure));
  warm_start_ = res.z;
  return sol;
}

FeedbackResult CctmpcController::vertex_feedback(const Eigen::VectorXd& x,
                                                 const TubeSolution& sol) const {
  const auto& vc = block_->config();
  const int mbar = vc.num_vertices();
  const int nu = block_->system().input_dim();
  const int n = block_->tmpl().dim();
  const Eigen::VectorXd& y0 = sol.y.front();

  Eigen::VectorXd Yx = block_->tmpl().Y * x;
  double tol = 10.0 * config_.solver.feas_tol * (1.0 + y0.lpNorm<Eigen::Infinity>());
  if ((Yx - y0).maxCoeff() > tol)
    throw InterpolationInfeasibleError("state is not enclosed by the first tube polytope");
  // Guard against states sitting a solver tolerance outside the polytope:
  // inflating the parameter keeps the interpolation solvable and moves the
  // vertices by at most the same tolerance.
  Eigen::VectorXd y_hat = y0.cwiseMax(Yx);

  Eigen::MatrixXd inputs(nu, mbar);
  for (int i = 0; i < mbar; ++i) inputs.col(i) = sol.u.front().segment(i * nu, nu);
  Eigen::MatrixXd vertices(n, mbar);
  for (int i = 0; i < mbar; ++i) vertices.col(i) = vc.vertex_maps[i] * y_hat;

  QuadraticProgram qp;
  Eigen::MatrixXd Hd = 2.0 * (inputs.transpose() * inputs +
                              kTikhonov * Eigen::MatrixXd::Identity(mbar, mbar));
  qp.H = Hd.sparseView();
  qp.c = Eigen::VectorXd::Zero(mbar);
  qp.G.resize(0, mbar);
  qp.h.resize(0);
  Eigen::MatrixXd Ad(n + 1, mbar);
  Ad.topRows(n) = vertices;
  Ad.bottomRows(1).setOnes();
  qp.A = Ad.sparseView();
  qp.b.resize(n + 1);
  qp.b.head(n) = x;
  qp.b[n] = 1.0;
  qp.lb = Eigen::VectorXd::Zero(mbar);
  SolveResult res = solve_qp(qp, config_.solver);
  if (res.status == SolveStatus::Infeasible)
    throw InterpolationInfeasibleError("vertex interpolation QP infeasible");
  if (!res.optimal()) throw CctmpcError("vertex interpolation QP " + to_string(res.status));

  FeedbackResult out;
  out.theta = res.z.cwiseMax(0.0);
  out.input = inputs * out.theta;
  return out;
}

double CctmpcController::terminal_cost(const Eigen::VectorXd& y) const {
  const auto& sys = block_->system();
  const auto& vc = block_->config();
  const int m = block_->tmpl().num_rows();
  const int mbar = vc.num_vertices();
  const int l = sys.num_models();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;

  double tol = 1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>());
  if (vc.E.rows() > 0 && (vc.E * y).maxCoeff() > tol) return kInf;
  for (int i = 0; i < mbar; ++i) {
    if (!sys.X.contains(vc.vertex_maps[i] * y, tol)) return kInf;
  }

  // variables (u_hat, alpha)
  const Eigen::VectorXd dir = synth_.sigma - synth_.y_s;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      Eigen::VectorXd base = block_->tube_map(j, i) * y + block_->w_bar() - synth_.y_s;
      const Eigen::MatrixXd& YB = block_->input_map(j);
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < nu; ++c)
          if (YB(r, c) != 0.0) trip.emplace_back(row + r, i * nu + c, YB(r, c));
        if (dir[r] != 0.0) trip.emplace_back(row + r, nuu, -dir[r]);
        rhs.push_back(-base[r]);
      }
      row += m;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    Eigen::VectorXd seg = sys.X.H * (vc.vertex_maps[i] * dir);
    Eigen::VectorXd base = sys.X.H * (vc.vertex_maps[i] * synth_.y_s);
    for (int r = 0; r < sys.X.num_rows(); ++r) {
      if (seg[r] != 0.0) trip.emplace_back(row, nuu, seg[r]);
      rhs.push_back(sys.X.h[r] - base[r]);
      ++row;
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
  trip.emplace_back(row, nuu, 1.0);
  rhs.push_back(1.0);
  ++row;
  trip.emplace_back(row, nuu, -1.0);
  rhs.push_back(0.0);
  ++row;

  QuadraticProgram qp;
  std::vector<Eigen::Triplet<double>> ht;
  for (int r = 0; r < nuu; ++r)
    for (int c = 0; c < nuu; ++c)
      if (cost_->Wu(r, c) != 0.0) ht.emplace_back(r, c, 2.0 * cost_->Wu(r, c));
  qp.H.resize(nuu + 1, nuu + 1);
  qp.H.setFromTriplets(ht.begin(), ht.end());
  qp.c = Eigen::VectorXd::Zero(nuu + 1);
  qp.c[nuu] = alpha_cost_coef_;
  qp.G.resize(row, nuu + 1);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  qp.A.resize(0, nuu + 1);
  qp.b.resize(0);
  // M values cancel against constants of the same magnitude as V_s, so the
  // small QP is solved two digits tighter than configured.
  SolverSettings tight = config_.solver;
  tight.feas_tol *= 1e-2;
  tight.stat_tol *= 1e-2;
  tight.comp_tol *= 1e-2;
  SolveResult res = solve_qp(qp, tight);
  if (res.status == SolveStatus::NumericalFailure) res = solve_qp(qp, config_.solver);
  if (res.status == SolveStatus::Infeasible) return kInf;
  if (!res.optimal()) throw CctmpcError("terminal cost QP " + to_string(res.status));

  double consts = y.dot(cost_->Wy * y) + synth_.lambda.dot(y - synth_.y_s) - synth_.V_s;
  return res.objective + consts;
}

double CctmpcController::rotated_cost(const Eigen::VectorXd& y, const Eigen::VectorXd& yplus) const {
  // The Lyapunov value sums O(N) of these, so each link is solved an order
  // tighter than the configured tolerance to keep the sum meaningful near
  // zero.
  SolverSettings tight = config_.solver;
  tight.feas_tol *= 1e-2;
  tight.stat_tol *= 1e-2;
  tight.comp_tol *= 1e-2;
  CostToTravel v;
  try {
    v = cost_to_travel(*block_, *cost_, y, yplus, tight);
  } catch (const CctmpcError&) {
    v = cost_to_travel(*block_, *cost_, y, yplus, config_.solver);
  }
  if (!v.feasible) return kInf;
  return v.value + synth_.lambda.dot(y - yplus) - synth_.V_s;
}

double CctmpcController::lyapunov_value(const std::vector<Eigen::VectorXd>& y_seq) const {
  if (y_seq.size() < 2) throw CctmpcError("lyapunov value needs at least two parameters");
  double total = 0.0;
  for (size_t k = 0; k + 1 < y_seq.size(); ++k) {
    double r = rotated_cost(y_seq[k], y_seq[k + 1]);
    if (!std::isfinite(r)) return kInf;
    total += r;
  }
  double mterm = terminal_cost(y_seq.back());
  if (!std::isfinite(mterm)) return kInf;
  return total + mterm;
}

double CctmpcController::descent_value(const Eigen::VectorXd& y) const {
  const auto& sys = block_->system();
  const auto& vc = block_->config();
  const int m = block_->tmpl().num_rows();
  const int mbar = vc.num_vertices();
  const int l = sys.num_models();
  const int nu = sys.input_dim();
  const int nuu = mbar * nu;

  double tol = 1e-8 * (1.0 + y.lpNorm<Eigen::Infinity>());
  if (vc.E.rows() > 0 && (vc.E * y).maxCoeff() > tol) return kInf;
  for (int i = 0; i < mbar; ++i) {
    if (!sys.X.contains(vc.vertex_maps[i] * y, tol)) return kInf;
  }

  // variables (y+, u, u_hat', alpha'); the lambda terms on y+ cancel as in
  // the step program
  const int oy = 0, ou = m, ouh = m + nuu, oa = m + 2 * nuu;
  const int nv = m + 2 * nuu + 1;
  const Eigen::VectorXd dir = synth_.sigma - synth_.y_s;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int row = 0;
  auto emit_dense = [&trip](int r0, int c0, const Eigen::MatrixXd& M) {
    for (int r = 0; r < M.rows(); ++r)
      for (int c = 0; c < M.cols(); ++c)
        if (M(r, c) != 0.0) trip.emplace_back(r0 + r, c0 + c, M(r, c));
  };
  // transition from the fixed y to y+ (cost-to-travel constraint set)
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      Eigen::VectorXd base = block_->tube_map(j, i) * y + block_->w_bar();
      emit_dense(row, ou + i * nu, block_->input_map(j));
      for (int r = 0; r < m; ++r) {
        trip.emplace_back(row + r, oy + r, -1.0);
        rhs.push_back(-base[r]);
      }
      row += m;
    }
  }
  emit_dense(row, oy, vc.E);
  for (int r = 0; r < vc.E.rows(); ++r) rhs.push_back(0.0);
  row += static_cast<int>(vc.E.rows());
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, ou + i * nu, sys.U.H);
    for (int r = 0; r < sys.U.num_rows(); ++r) rhs.push_back(sys.U.h[r]);
    row += sys.U.num_rows();
  }
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, oy, sys.X.H * vc.vertex_maps[i]);
    for (int r = 0; r < sys.X.num_rows(); ++r) rhs.push_back(sys.X.h[r]);
    row += sys.X.num_rows();
  }
  // terminal epigraph rows from (y+, u_hat') to y_s + alpha'(sigma - y_s)
  for (int i = 0; i < mbar; ++i) {
    for (int j = 0; j < l; ++j) {
      emit_dense(row, oy, block_->tube_map(j, i));
      emit_dense(row, ouh + i * nu, block_->input_map(j));
      for (int r = 0; r < m; ++r) {
        if (dir[r] != 0.0) trip.emplace_back(row + r, oa, -dir[r]);
        rhs.push_back(synth_.y_s[r] - block_->w_bar()[r]);
      }
      row += m;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    Eigen::VectorXd seg = sys.X.H * (vc.vertex_maps[i] * dir);
    Eigen::VectorXd base = sys.X.H * (vc.vertex_maps[i] * synth_.y_s);
    for (int r = 0; r < sys.X.num_rows(); ++r) {
      if (seg[r] != 0.0) trip.emplace_back(row, oa, seg[r]);
      rhs.push_back(sys.X.h[r] - base[r]);
      ++row;
    }
  }
  for (int i = 0; i < mbar; ++i) {
    emit_dense(row, ouh + i * nu, sys.U.H);
    for (int r = 0; r < sys.U.num_rows(); ++r) rhs.push_back(sys.U.h[r]);
    row += sys.U.num_rows();
  }
  trip.emplace_back(row, oa, 1.0);
  rhs.push_back(1.0);
  ++row;
  trip.emplace_back(row, oa, -1.0);
  rhs.push_back(0.0);
  ++row;

  QuadraticProgram qp;
  std::vector<Eigen::Triplet<double>> ht;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (cost_->Wy(r, c) != 0.0) ht.emplace_back(oy + r, oy + c, 2.0 * cost_->Wy(r, c));
  for (int r = 0; r < nuu; ++r)
    for (int c = 0; c < nuu; ++c)
      if (cost_->Wu(r, c) != 0.0) {
        ht.emplace_back(ou + r, ou + c, 2.0 * cost_->Wu(r, c));
        ht.emplace_back(ouh + r, ouh + c, 2.0 * cost_->Wu(r, c));
      }
  qp.H.resize(nv, nv);
  qp.H.setFromTriplets(ht.begin(), ht.end());
  qp.c = Eigen::VectorXd::Zero(nv);
  qp.c[oa] = alpha_cost_coef_;
  qp.G.resize(row, nv);
  qp.G.setFromTriplets(trip.begin(), trip.end());
  qp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  qp.A.resize(0, nv);
  qp.b.resize(0);
  SolverSettings tight = config_.solver;
  tight.feas_tol *= 1e-2;
  tight.stat_tol *= 1e-2;
  tight.comp_tol *= 1e-2;
  SolveResult res = solve_qp(qp, tight);
  if (res.status == SolveStatus::NumericalFailure) res = solve_qp(qp, config_.solver);
  if (res.status == SolveStatus::Infeasible) return kInf;
  if (!res.optimal()) throw CctmpcError("descent QP " + to_string(res.status));
  double consts = y.dot(cost_->Wy * y) + synth_.lambda.dot(y - synth_.y_s) - 2.0 * synth_.V_s;
  return res.objective + consts;
}

TubeSolution CctmpcController::shifted_warm_start(const TubeSolution& sol) const {
  const int N = config_.horizon;
  if (sol.horizon() != N) throw CctmpcError("warm start horizon mismatch");

  TubeSolution cand;
  cand.y.assign(sol.y.begin() + 1, sol.y.end());
  cand.u.assign(sol.u.begin() + 1, sol.u.end());
  // terminal extension along the homothetic segment, certified by the
  // previous epigraph inputs
  Eigen::VectorXd y_term = synth_.y_s + sol.alpha * (synth_.sigma - synth_.y_s);
  cand.y.push_back(y_term);
  cand.u.push_back(sol.u_terminal);
  cand.alpha = synth_.gamma * sol.alpha;
  Eigen::VectorXd y_term_next = synth_.y_s + cand.alpha * (synth_.sigma - synth_.y_s);
  CostToTravel ct = cost_to_travel(*block_, *cost_, y_term, y_term_next, config_.solver);
  if (!ct.feasible)
    throw CctmpcError("shifted warm start: terminal transition unexpectedly infeasible");
  cand.u_terminal = ct.inputs;
  cand.objective = objective_value(cand);
  return cand;
}

double CctmpcController::objective_value(const TubeSolution& sol) const {
  const int N = config_.horizon;
  double total = synth_.lambda.dot(sol.y.front());
  for (int k = 0; k < N; ++k) total += cost_->evaluate(sol.y[k], sol.u[k]);
  total += cost_->evaluate(sol.y[N], sol.u_terminal);
  total += alpha_cost_coef_ * sol.alpha;
  total += objective_constant();
  // Tikhonov term, so candidate values compare against solved objectives
  double sq = sol.alpha * sol.alpha;
  for (int k = 0; k <= N; ++k) sq += sol.y[k].squaredNorm();
  for (int k = 0; k < N; ++k) sq += sol.u[k].squaredNorm();
  sq += sol.u_terminal.squaredNorm();
  return total + kTikhonov * sq;
}

}  // namespace cctmpc
