#include "cctmpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>
#include <cstdio>
#include <cstdlib>

#include <Eigen/SparseCholesky>

namespace cctmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

bool all_finite(const SpMat& m) {
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      if (!std::isfinite(it.value())) return false;
    }
  }
  return true;
}

void check_block_dims(int n, const SpMat& G, const Eigen::VectorXd& h, const SpMat& A,
                      const Eigen::VectorXd& b, const Eigen::VectorXd& lb,
                      const Eigen::VectorXd& ub) {
  if (G.rows() != h.size()) throw std::invalid_argument("inequality block: G/h row mismatch");
  if (G.rows() > 0 && G.cols() != n) throw std::invalid_argument("inequality block: G column mismatch");
  if (A.rows() != b.size()) throw std::invalid_argument("equality block: A/b row mismatch");
  if (A.rows() > 0 && A.cols() != n) throw std::invalid_argument("equality block: A column mismatch");
  if (lb.size() != 0 && lb.size() != n) throw std::invalid_argument("lb dimension mismatch");
  if (ub.size() != 0 && ub.size() != n) throw std::invalid_argument("ub dimension mismatch");
  if (!all_finite(G) || !all_finite(A)) throw std::invalid_argument("constraint matrix has non-finite entries");
  if (!all_finite(h) || !all_finite(b)) throw std::invalid_argument("constraint rhs has non-finite entries");
}

// Effective inequality system with box bounds folded in as extra rows.
struct FoldedIneq {
  SpMat G;
  Eigen::VectorXd h;
};

FoldedIneq fold_bounds(int n, const SpMat& G, const Eigen::VectorXd& h,
                       const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
  std::vector<int> ub_idx, lb_idx;
  for (int i = 0; i < ub.size(); ++i) {
    if (ub[i] < kInf) ub_idx.push_back(i);
  }
  for (int i = 0; i < lb.size(); ++i) {
    if (lb[i] > -kInf) lb_idx.push_back(i);
  }
  const int extra = static_cast<int>(ub_idx.size() + lb_idx.size());
  FoldedIneq out;
  out.G.resize(G.rows() + extra, n);
  out.h.resize(G.rows() + extra);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(G.nonZeros() + extra);
  for (int k = 0; k < G.outerSize(); ++k) {
    for (SpMat::InnerIterator it(G, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  int r = static_cast<int>(G.rows());
  out.h.head(G.rows()) = h;
  for (int i : ub_idx) {
    trip.emplace_back(r, i, 1.0);
    out.h[r++] = ub[i];
  }
  for (int i : lb_idx) {
    trip.emplace_back(r, i, -1.0);
    out.h[r++] = -lb[i];
  }
  out.G.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// Solves the regularized quasidefinite KKT system
//
//   [ P + G' D G + d1 I    A' ] [x]   [r1]
//   [ A                  -d2 I] [y] = [r2]
//
// with LDL' and two rounds of iterative refinement against the
// unregularized operator.
class KktSystem {
 public:
  KktSystem(const SpMat& P, const SpMat& G, const SpMat& A, double d1, double d2)
      : P_(P), G_(G), A_(A), n_(static_cast<int>(G.cols())), p_(static_cast<int>(A.rows())),
        d1_(d1), d2_(d2) {}

  bool factorize(const Eigen::VectorXd& d) {
    d_ = d;
    SpMat GtDG;
    if (G_.rows() > 0) {
      SpMat DG = d.asDiagonal() * G_;
      GtDG = SpMat(G_.transpose()) * DG;
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(P_.nonZeros() + GtDG.nonZeros() + 2 * A_.nonZeros() + n_ + p_);
    auto push = [&trip](const SpMat& m, int roff, int coff, bool transpose) {
      for (int k = 0; k < m.outerSize(); ++k) {
        for (SpMat::InnerIterator it(m, k); it; ++it) {
          if (transpose)
            trip.emplace_back(coff + it.col(), roff + it.row(), it.value());
          else
            trip.emplace_back(roff + it.row(), coff + it.col(), it.value());
        }
      }
    };
    push(P_, 0, 0, false);
    if (GtDG.rows() > 0) push(GtDG, 0, 0, false);
    if (p_ > 0) {
      push(A_, n_, 0, false);
      push(A_, n_, 0, true);  // A' in the (1,2) block
    }
    for (int i = 0; i < n_; ++i) trip.emplace_back(i, i, d1_);
    for (int i = 0; i < p_; ++i) trip.emplace_back(n_ + i, n_ + i, -d2_);
    SpMat K(n_ + p_, n_ + p_);
    K.setFromTriplets(trip.begin(), trip.end());
    ldlt_.compute(K);
    return ldlt_.info() == Eigen::Success;
  }

  // Solves for [x;y] given rhs [r1;r2]; refines against the d1=d2=0 operator.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, int refinement_passes = 6) const {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    for (int pass = 0; pass < refinement_passes; ++pass) {
      Eigen::VectorXd res = rhs - apply_unregularized(sol);
      if (res.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      sol += ldlt_.solve(res);
    }
    return sol;
  }

 private:
  Eigen::VectorXd apply_unregularized(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(n_ + p_);
    Eigen::VectorXd x = v.head(n_);
    // P_ is stored as a full symmetric matrix, so the plain product is correct.
    out.head(n_) = P_ * x;
    if (G_.rows() > 0) out.head(n_) += G_.transpose() * (d_.asDiagonal() * (G_ * x));
    if (p_ > 0) {
      out.head(n_) += A_.transpose() * v.tail(p_);
      out.tail(p_) = A_ * x;
    }
    return out;
  }

  const SpMat& P_;
  const SpMat& G_;
  const SpMat& A_;
  int n_, p_;
  double d1_, d2_;
  Eigen::VectorXd d_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = kInf;
  for (int i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  }
  return a;
}

bool polish_kkt(const SpMat& H, const Eigen::VectorXd& c, const SpMat& G,
                const Eigen::VectorXd& h, const SpMat& A, const Eigen::VectorXd& b,
                const Eigen::VectorXd& s, const Eigen::VectorXd& mu, bool require_improvement,
                SolveResult& res);

bool nnls_with_free(const Eigen::MatrixXd& M, const Eigen::MatrixXd& F, const Eigen::VectorXd& g,
                    Eigen::VectorXd& x, Eigen::VectorXd& y, int max_iter = 400) {
  const int k = static_cast<int>(M.cols());
  const int p = static_cast<int>(F.cols());
  x.setZero(k);
  y.setZero(p);
  std::vector<bool> passive(k, false);

  auto solve_ls = [&](const std::vector<int>& pset, Eigen::VectorXd& xp, Eigen::VectorXd& yp) {
    Eigen::MatrixXd cols(M.rows(), p + pset.size());
    if (p) cols.leftCols(p) = F;
    for (size_t j = 0; j < pset.size(); ++j) cols.col(p + j) = M.col(pset[j]);
    Eigen::VectorXd sol = cols.colPivHouseholderQr().solve(g);
    yp = sol.head(p);
    xp = sol.tail(pset.size());
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    std::vector<int> pset;
    for (int j = 0; j < k; ++j)
      if (passive[j]) pset.push_back(j);
    Eigen::VectorXd residual = g - M * x - (p ? Eigen::VectorXd(F * y) : Eigen::VectorXd::Zero(g.size()));
    double best = 1e-10 * (1.0 + g.lpNorm<Eigen::Infinity>());
    int best_j = -1;
    for (int j = 0; j < k; ++j) {
      if (passive[j]) continue;
      double w = M.col(j).dot(residual);
      if (w > best) {
        best = w;
        best_j = j;
      }
    }
    if (best_j < 0) return true;  // KKT of the NNLS problem holds
    passive[best_j] = true;
    pset.clear();
    for (int j = 0; j < k; ++j)
      if (passive[j]) pset.push_back(j);

    for (int inner = 0; inner < max_iter; ++inner) {
      Eigen::VectorXd xp, yp;
      solve_ls(pset, xp, yp);
      double min_xp = pset.empty() ? 1.0 : xp.minCoeff();
      if (min_xp > 0.0) {
        x.setZero();
        for (size_t j = 0; j < pset.size(); ++j) x[pset[j]] = xp[j];
        y = yp;
        break;
      }
      // step from x toward xp until the first passive coordinate hits zero
      double alpha = 1.0;
      for (size_t j = 0; j < pset.size(); ++j) {
        double xc = x[pset[j]];
        if (xp[j] <= 0.0 && xc - xp[j] > 0.0) alpha = std::min(alpha, xc / (xc - xp[j]));
      }
      Eigen::VectorXd xnew = Eigen::VectorXd::Zero(k);
      for (size_t j = 0; j < pset.size(); ++j)
        xnew[pset[j]] = x[pset[j]] + alpha * (xp[j] - x[pset[j]]);
      x = xnew;
      std::vector<int> keep;
      for (int j : pset)
        if (x[j] > 1e-14) keep.push_back(j);
        else {
          passive[j] = false;
          x[j] = 0.0;
        }
      if (keep.size() == pset.size()) return false;  // no progress; bail out
      pset = keep;
    }
  }
  return false;
}

struct LpData {
  Eigen::VectorXd c;
  SpMat G;
  Eigen::VectorXd h;
  SpMat A;
  Eigen::VectorXd b;
};

// Homogeneous self-dual interior-point method for LP. Distinguishes Optimal,
// Infeasible (Farkas certificate b'nu + h'mu < 0 with A'nu + G'mu ~ 0) and
// Unbounded (ray c'x < 0 with Ax ~ 0, Gx + s ~ 0).
SolveResult solve_lp_hsd(const LpData& d, const SolverSettings& st) {
  const int n = static_cast<int>(d.c.size());
  const int mG = static_cast<int>(d.G.rows());
  const int p = static_cast<int>(d.A.rows());

  SolveResult res;
  res.z.setZero(n);
  res.mu.setZero(mG);
  res.nu.setZero(p);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mu = Eigen::VectorXd::Ones(mG);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(mG);
  double tau = 1.0, kappa = 1.0;

  const double norm_b = 1.0 + d.b.lpNorm<Eigen::Infinity>();
  const double norm_h = 1.0 + (mG > 0 ? d.h.lpNorm<Eigen::Infinity>() : 0.0);
  const double norm_c = 1.0 + d.c.lpNorm<Eigen::Infinity>();

  SpMat P(n, n);  // zero quadratic term
  const double reg = 1e-7;
  KktSystem kkt(P, d.G, d.A, reg, reg);

  // Exact active-set solve from the scaled iterate; rescues degenerate LPs
  // whose final centering steps collapse.
  auto try_polish = [&](const Eigen::VectorXd& s, const Eigen::VectorXd& mu, double tau,
                        SolveResult& out) {
    if (tau <= 1e-12 || !s.allFinite() || !mu.allFinite()) return false;
    out.objective = kInf;
    return polish_kkt(P, d.c, d.G, d.h, d.A, d.b, s / tau, mu / tau,
                      /*require_improvement=*/false, out);
  };

  const double mu0 = 1.0;  // (s'mu + tau*kappa)/(mG+1) at the unit start
  const bool trace = std::getenv("CCTMPC_TRACE_IPM") != nullptr;
  // Late iterations can corrupt the duals through 1/s roundoff after the
  // problem has effectively converged, so the best iterate seen is kept as a
  // fallback for the exit paths.
  struct Snapshot {
    Eigen::VectorXd x, nu, mu, s;
    double tau = 1.0, kappa = 1.0, merit = kInf;
  } best;
  for (int iter = 0; iter < st.max_iter; ++iter) {
    Eigen::VectorXd rp = d.A * x - d.b * tau;
    Eigen::VectorXd rg = d.G * x + s - d.h * tau;
    Eigen::VectorXd rd = d.A.transpose() * nu + d.G.transpose() * mu + d.c * tau;
    double rt = d.c.dot(x) + d.b.dot(nu) + d.h.dot(mu) + kappa;
    double mu_meas = (s.dot(mu) + tau * kappa) / (mG + 1.0);
    if (trace)
      std::fprintf(stderr, "hsd it=%d tau=%.3e kappa=%.3e mu=%.3e rp=%.3e rg=%.3e rd=%.3e cx=%.3e\n",
                   iter, tau, kappa, mu_meas, p ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                   mG ? rg.lpNorm<Eigen::Infinity>() : 0.0, rd.lpNorm<Eigen::Infinity>(),
                   d.c.dot(x));
    {
      double merit = (p ? rp.lpNorm<Eigen::Infinity>() : 0.0) / (tau * norm_b) +
                     (mG ? rg.lpNorm<Eigen::Infinity>() : 0.0) / (tau * norm_h) +
                     rd.lpNorm<Eigen::Infinity>() / (tau * norm_c) +
                     (s.dot(mu) + tau * kappa) / (tau * tau);
      if (tau > 1e-10 && merit < best.merit) best = Snapshot{x, nu, mu, s, tau, kappa, merit};
    }

    // Optimality of the scaled point.
    auto declare_optimal = [&](double relax) {
      double pobj = d.c.dot(x) / tau;
      double dobj = -(d.b.dot(nu) + d.h.dot(mu)) / tau;
      bool feas_ok = (p == 0 || rp.lpNorm<Eigen::Infinity>() / tau <= relax * st.feas_tol * norm_b) &&
                     (mG == 0 || rg.lpNorm<Eigen::Infinity>() / tau <= relax * st.feas_tol * norm_h);
      bool dual_ok = rd.lpNorm<Eigen::Infinity>() / tau <= relax * st.stat_tol * norm_c;
      bool gap_ok = std::abs(pobj - dobj) <= relax * st.comp_tol * (1.0 + std::abs(pobj) + std::abs(dobj)) ||
                    (s.dot(mu) + tau * kappa) / (tau * tau) <=
                        relax * st.comp_tol * (1.0 + std::abs(pobj));
      if (!(feas_ok && dual_ok && gap_ok)) return false;
      res.status = SolveStatus::Optimal;
      res.z = x / tau;
      res.mu = mu / tau;
      res.nu = nu / tau;
      res.objective = pobj;
      res.iterations = iter;
      res.primal_residual = std::max(p ? rp.lpNorm<Eigen::Infinity>() / tau : 0.0,
                                     mG ? std::max(0.0, (d.G * res.z - d.h).maxCoeff()) : 0.0);
      res.dual_residual = rd.lpNorm<Eigen::Infinity>() / tau;
      res.complementarity = mG ? (res.mu.array() * (d.h - d.G * res.z).array()).abs().maxCoeff() : 0.0;
      return true;
    };
    if (declare_optimal(1.0)) return res;

    // The iterates drive tau*kappa -> 0. Which of tau and kappa survives
    // separates the outcomes: kappa >> tau encodes an infeasibility or
    // unboundedness ray, while a healthy tau means the LP converged and only
    // the final centering stalled.
    if (mu_meas <= 1e-12 * mu0 || tau <= 1e-12) {
      if (kappa > 1e4 * tau) {
        double infeas_val = -(d.b.dot(nu) + d.h.dot(mu));
        bool farkas = infeas_val > 0.0 &&
                      (d.A.transpose() * nu + d.G.transpose() * mu).lpNorm<Eigen::Infinity>() <=
                          1e-7 * infeas_val;
        double unbd_val = -d.c.dot(x);
        bool ray = unbd_val > 0.0 &&
                   (p == 0 || (d.A * x).lpNorm<Eigen::Infinity>() <= 1e-7 * unbd_val) &&
                   (mG == 0 || (d.G * x + s).lpNorm<Eigen::Infinity>() <= 1e-7 * unbd_val);
        if (farkas) {
          res.status = SolveStatus::Infeasible;
          res.nu = nu;
          res.mu = mu;
          res.has_certificate = true;
          res.iterations = iter;
          return res;
        }
        if (ray) {
          res.status = SolveStatus::Unbounded;
          res.z = x;
          res.has_certificate = true;
          res.iterations = iter;
          return res;
        }
      }
      if (declare_optimal(10.0)) return res;
      if (best.merit < kInf) {
        x = best.x; nu = best.nu; mu = best.mu; s = best.s; tau = best.tau; kappa = best.kappa;
        rp = d.A * x - d.b * tau;
        rg = d.G * x + s - d.h * tau;
        rd = d.A.transpose() * nu + d.G.transpose() * mu + d.c * tau;
        if (declare_optimal(10.0)) return res;
      }
      if (try_polish(s, mu, tau, res)) {
        res.iterations = iter;
        return res;
      }
      res.status = SolveStatus::NumericalFailure;
      res.iterations = iter;
      return res;
    }

    Eigen::VectorXd dvec =
        (mu.array().max(1e-300) / s.array().max(1e-300)).min(1e12).max(1e-12).matrix();
    if (!kkt.factorize(dvec)) {
      if (declare_optimal(10.0)) return res;
      if (best.merit < kInf) {
        x = best.x; nu = best.nu; mu = best.mu; s = best.s; tau = best.tau; kappa = best.kappa;
        rp = d.A * x - d.b * tau;
        rg = d.G * x + s - d.h * tau;
        rd = d.A.transpose() * nu + d.G.transpose() * mu + d.c * tau;
        if (declare_optimal(10.0)) return res;
      }
      if (try_polish(s, mu, tau, res)) {
        res.iterations = iter;
        return res;
      }
      res.status = SolveStatus::NumericalFailure;
      res.iterations = iter;
      return res;
    }

    Eigen::VectorXd GtDh = mG ? Eigen::VectorXd(d.G.transpose() * dvec.cwiseProduct(d.h))
                              : Eigen::VectorXd::Zero(n);

    auto newton = [&](double eta, const Eigen::VectorXd& rs, double rk, Eigen::VectorXd& dx,
                      Eigen::VectorXd& dnu, Eigen::VectorXd& dmu, Eigen::VectorXd& ds,
                      double& dtau, double& dkappa) {
      Eigen::VectorXd f(n + p), g(n + p);
      Eigen::VectorXd Sinv_rs = mG ? Eigen::VectorXd(rs.array() / s.array()) : Eigen::VectorXd(0);
      f.head(n) = -eta * rd;
      if (mG) f.head(n) -= d.G.transpose() * (Sinv_rs + eta * dvec.cwiseProduct(rg));
      if (p) f.tail(p) = -eta * rp;
      g.head(n) = GtDh - d.c;
      if (p) g.tail(p) = d.b;
      Eigen::VectorXd u = kkt.solve(f);
      Eigen::VectorXd v = kkt.solve(g);

      // Scalar equation for dtau.
      auto scalar_terms = [&](const Eigen::VectorXd& w) {
        double val = d.c.dot(w.head(n));
        if (p) val += d.b.dot(w.tail(p));
        if (mG) val += d.h.dot(dvec.cwiseProduct(d.G * w.head(n)));
        return val;
      };
      double lhs_u = scalar_terms(u) + (mG ? d.h.dot(Sinv_rs) + eta * d.h.dot(dvec.cwiseProduct(rg)) : 0.0) +
                     rk / tau;
      double coef = scalar_terms(v) - (mG ? d.h.dot(dvec.cwiseProduct(d.h)) : 0.0) - kappa / tau;
      dtau = (-eta * rt - lhs_u) / coef;
      dx = u.head(n) + dtau * v.head(n);
      if (p)
        dnu = u.tail(p) + dtau * v.tail(p);
      else
        dnu.resize(0);
      if (mG) {
        ds = -eta * rg - d.G * dx + d.h * dtau;
        dmu = Sinv_rs - dvec.cwiseProduct(ds);
      } else {
        ds.resize(0);
        dmu.resize(0);
      }
      dkappa = (rk - kappa * dtau) / tau;
    };

    // Predictor.
    Eigen::VectorXd dx, dnu, dmu, ds;
    double dtau, dkappa;
    Eigen::VectorXd rs_aff = mG ? Eigen::VectorXd(-(s.array() * mu.array()).matrix()) : Eigen::VectorXd(0);
    newton(1.0, rs_aff, -tau * kappa, dx, dnu, dmu, ds, dtau, dkappa);

    double alpha_aff = 1.0;
    if (mG) alpha_aff = std::min({alpha_aff, step_to_boundary(s, ds), step_to_boundary(mu, dmu)});
    if (dtau < 0) alpha_aff = std::min(alpha_aff, -tau / dtau);
    if (dkappa < 0) alpha_aff = std::min(alpha_aff, -kappa / dkappa);

    double mu_aff = ((mG ? (s + alpha_aff * ds).dot(mu + alpha_aff * dmu) : 0.0) +
                     (tau + alpha_aff * dtau) * (kappa + alpha_aff * dkappa)) /
                    (mG + 1.0);
    double gamma = std::pow(mu_aff / mu_meas, 3);
    gamma = std::clamp(gamma, 1e-8, 1.0);

    // Corrector.
    Eigen::VectorXd rs = mG ? Eigen::VectorXd((gamma * mu_meas - (s.array() * mu.array()) -
                                               (ds.array() * dmu.array()))
                                                  .matrix())
                            : Eigen::VectorXd(0);
    double rk = gamma * mu_meas - tau * kappa - dtau * dkappa;
    newton(1.0 - gamma, rs, rk, dx, dnu, dmu, ds, dtau, dkappa);

    double alpha = 1.0;
    if (mG) alpha = std::min({alpha, step_to_boundary(s, ds), step_to_boundary(mu, dmu)});
    if (dtau < 0) alpha = std::min(alpha, -tau / dtau);
    if (dkappa < 0) alpha = std::min(alpha, -kappa / dkappa);
    alpha = std::min(1.0, 0.99 * alpha);

    if (!std::isfinite(alpha) || alpha <= 1e-14) {
      if (declare_optimal(10.0)) return res;
      if (best.merit < kInf) {
        x = best.x; nu = best.nu; mu = best.mu; s = best.s; tau = best.tau; kappa = best.kappa;
        rp = d.A * x - d.b * tau;
        rg = d.G * x + s - d.h * tau;
        rd = d.A.transpose() * nu + d.G.transpose() * mu + d.c * tau;
        if (declare_optimal(10.0)) return res;
      }
      if (try_polish(s, mu, tau, res)) {
        res.iterations = iter;
        return res;
      }
      res.status = SolveStatus::NumericalFailure;
      res.iterations = iter;
      return res;
    }

    x += alpha * dx;
    if (p) nu += alpha * dnu;
    if (mG) {
      s += alpha * ds;
      mu += alpha * dmu;
    }
    tau += alpha * dtau;
    kappa += alpha * dkappa;
  }

  if (best.merit < kInf && try_polish(best.s, best.mu, best.tau, res)) {
    res.iterations = st.max_iter;
    return res;
  }
  if (try_polish(s, mu, tau, res)) {
    res.iterations = st.max_iter;
    return res;
  }
  res.status = SolveStatus::NumericalFailure;
  res.iterations = st.max_iter;
  return res;
}

struct QpData {
  const SpMat& H;
  Eigen::VectorXd c;
  SpMat G;
  Eigen::VectorXd h;
  SpMat A;
  Eigen::VectorXd b;
};

// Active-set polishing: treating the rows the interior-point method ends on
// as exact equalities and re-solving the KKT system removes the O(tol)
// centering error, which matters at degenerate corners where duals are
// large. The polished point replaces the iterate only when it satisfies the
// optimality contracts outright, so this doubles as a recovery path for
// stalled iterations. Works for LPs with a zero quadratic term.
bool polish_kkt_with_active(const SpMat& H, const Eigen::VectorXd& c, const SpMat& G,
                            const Eigen::VectorXd& h, const SpMat& A, const Eigen::VectorXd& b,
                            const std::vector<int>& active, bool require_improvement,
                            SolveResult& res) {
  const int n = static_cast<int>(c.size());
  const int mG = static_cast<int>(G.rows());
  const int p = static_cast<int>(A.rows());
  const int k = static_cast<int>(active.size());

  SpMat eq(p + k, n);
  Eigen::VectorXd ha(k);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int kk = 0; kk < A.outerSize(); ++kk)
      for (SpMat::InnerIterator it(A, kk); it; ++it)
        trip.emplace_back(it.row(), it.col(), it.value());
    for (int r = 0; r < k; ++r) ha[r] = h[active[r]];
    // G is column-major; gather the active rows in one pass.
    for (int col = 0; col < G.outerSize(); ++col) {
      for (SpMat::InnerIterator it(G, col); it; ++it) {
        auto pos = std::lower_bound(active.begin(), active.end(), static_cast<int>(it.row()));
        if (pos != active.end() && *pos == static_cast<int>(it.row()))
          trip.emplace_back(p + static_cast<int>(pos - active.begin()), col, it.value());
      }
    }
    eq.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::VectorXd rhs(n + p + k);
  rhs.head(n) = -c;
  if (p) rhs.segment(n, p) = b;
  rhs.tail(k) = ha;
  Eigen::VectorXd sol;
  if (n + p + k <= 600) {
    // Rank-revealing dense solve: active sets at degenerate corners are
    // rank deficient, and the least-squares solution avoids the bias a
    // regularized factorization would leave in the null directions.
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + p + k, n + p + k);
    K.topLeftCorner(n, n) = Eigen::MatrixXd(H);
    Eigen::MatrixXd EQ(p + k, n);
    if (p) EQ.topRows(p) = Eigen::MatrixXd(A);
    for (int r = 0; r < k; ++r) EQ.row(p + r) = G.row(active[r]);
    K.block(n, 0, p + k, n) = EQ;
    K.block(0, n, n, p + k) = EQ.transpose();
    sol = K.colPivHouseholderQr().solve(rhs);
  } else {
    SpMat noineq(0, n);
    KktSystem kkt(H, noineq, eq, 1e-7, 1e-7);
    if (!kkt.factorize(Eigen::VectorXd(0))) return false;
    sol = kkt.solve(rhs, 8);
  }
  Eigen::VectorXd z = sol.head(n);
  Eigen::VectorXd nu = p ? Eigen::VectorXd(sol.segment(n, p)) : Eigen::VectorXd(0);
  Eigen::VectorXd mua = sol.tail(k);
  const bool trace = std::getenv("CCTMPC_TRACE_IPM") != nullptr;
  if (!z.allFinite() || !mua.allFinite()) {
    if (trace) std::fprintf(stderr, "polish k=%d: non-finite solve\n", k);
    return false;
  }

  const double feas_scale = 1.0 + (mG ? h.lpNorm<Eigen::Infinity>() : 0.0);
  double primal_viol = mG ? std::max(0.0, (G * z - h).maxCoeff()) : 0.0;
  double eq_viol = p ? (A * z - b).lpNorm<Eigen::Infinity>() : 0.0;
  if (primal_viol > 1e-9 * feas_scale || eq_viol > 1e-9 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
    if (trace) std::fprintf(stderr, "polish k=%d: viol=%.3e eq=%.3e\n", k, primal_viol, eq_viol);
    return false;
  }

  if (k && mua.minCoeff() < -1e-6 * (1.0 + mua.lpNorm<Eigen::Infinity>())) {
    // Rank-deficient active set: the KKT dual split can dip negative even
    // though a nonnegative one exists. Recover it with NNLS on the
    // stationarity equation.
    if (k > 400) {
      if (trace) std::fprintf(stderr, "polish k=%d: dual recovery too large\n", k);
      return false;
    }
    Eigen::MatrixXd M(n, k);
    for (int r = 0; r < k; ++r) M.col(r) = G.row(active[r]).transpose();
    Eigen::MatrixXd F = p ? Eigen::MatrixXd(A.transpose()) : Eigen::MatrixXd(n, 0);
    Eigen::VectorXd g = -(H * z + c);
    Eigen::VectorXd mu_rec, nu_rec;
    if (!nnls_with_free(M, F, g, mu_rec, nu_rec)) {
      if (trace) std::fprintf(stderr, "polish k=%d: dual NNLS failed\n", k);
      return false;
    }
    mua = mu_rec;
    if (p) nu = nu_rec;
  }

  Eigen::VectorXd mu_full = Eigen::VectorXd::Zero(mG);
  for (int r = 0; r < k; ++r) mu_full[active[r]] = std::max(0.0, mua[r]);

  Eigen::VectorXd Hz = H * z;
  Eigen::VectorXd rd = Hz + c + G.transpose() * mu_full;
  if (p) rd += A.transpose() * nu;
  double stat_scale = 1.0 + c.lpNorm<Eigen::Infinity>() + Hz.lpNorm<Eigen::Infinity>() +
                      (mG ? (G.transpose() * mu_full).lpNorm<Eigen::Infinity>() : 0.0);
  if (rd.lpNorm<Eigen::Infinity>() > 1e-7 * stat_scale) {
    if (trace)
      std::fprintf(stderr, "polish k=%d: stationarity %.3e scale %.3e\n", k,
                   rd.lpNorm<Eigen::Infinity>(), stat_scale);
    return false;
  }

  double obj = 0.5 * z.dot(Hz) + c.dot(z);
  if (require_improvement && obj > res.objective + 1e-9 * (1.0 + std::abs(res.objective)))
    return false;
  // A slightly infeasible point can undercut the true optimum by roughly
  // violation times the dual magnitude; reject when that product is not
  // negligible against the objective.
  double dual_mass = 1.0 + mu_full.lpNorm<1>() + (p ? nu.lpNorm<1>() : 0.0);
  if (std::max(primal_viol, eq_viol) * dual_mass > 1e-8 * (1.0 + std::abs(obj))) {
    if (trace)
      std::fprintf(stderr, "polish k=%d: value-aware reject viol=%.3e duals=%.3e\n", k,
                   std::max(primal_viol, eq_viol), dual_mass);
    return false;
  }

  res.status = SolveStatus::Optimal;
  res.z = z;
  res.nu = nu;
  res.mu = mu_full;
  res.objective = obj;
  res.dual_residual = rd.lpNorm<Eigen::Infinity>();
  res.primal_residual = std::max(primal_viol, eq_viol);
  res.complementarity =
      mG ? (mu_full.array() * (h - G * z).array()).abs().maxCoeff() : 0.0;
  return true;
}

bool polish_kkt(const SpMat& H, const Eigen::VectorXd& c, const SpMat& G,
                const Eigen::VectorXd& h, const SpMat& A, const Eigen::VectorXd& b,
                const Eigen::VectorXd& s, const Eigen::VectorXd& mu, bool require_improvement,
                SolveResult& res) {
  const int mG = static_cast<int>(G.rows());
  // The active set at a stalled iterate is uncertain; sweep a few thresholds
  // and keep the first split whose exact solve passes every optimality check.
  std::vector<int> last;
  for (double thresh : {1.0, 1e-2, 1e2, 1e-4}) {
    std::vector<int> active;
    for (int i = 0; i < mG; ++i) {
      if (s[i] <= thresh * mu[i]) active.push_back(i);
    }
    if (active == last) continue;
    last = active;
    if (polish_kkt_with_active(H, c, G, h, A, b, active, require_improvement, res)) return true;
  }
  return false;
}

// Infeasible-start Mehrotra predictor-corrector for convex QP. The
// conservative mode replaces the aggressive predictor-corrector with damped
// fixed-centering steps, which grinds slowly but survives the degenerate
// boundary problems the fast mode can stall on.
SolveResult solve_qp_ipm(const QpData& d, const SolverSettings& st, bool conservative) {
  const int n = static_cast<int>(d.c.size());
  const int mG = static_cast<int>(d.G.rows());
  const int p = static_cast<int>(d.A.rows());

  SolveResult res;

  const double norm_b = 1.0 + (p ? d.b.lpNorm<Eigen::Infinity>() : 0.0);
  const double norm_h = 1.0 + (mG ? d.h.lpNorm<Eigen::Infinity>() : 0.0);
  const double norm_c = 1.0 + d.c.lpNorm<Eigen::Infinity>();

  const double reg = 1e-7;
  KktSystem kkt(d.H, d.G, d.A, reg, reg);

  // Initial point: solve the KKT system with unit scaling, then shift the
  // conic variables into the interior.
  Eigen::VectorXd z, nu, s, mu;
  {
    if (!kkt.factorize(Eigen::VectorXd::Ones(mG))) {
      res.status = SolveStatus::NumericalFailure;
      return res;
    }
    Eigen::VectorXd rhs(n + p);
    rhs.head(n) = -d.c;
    if (mG) rhs.head(n) += d.G.transpose() * d.h;
    if (p) rhs.tail(p) = d.b;
    Eigen::VectorXd sol = kkt.solve(rhs);
    z = sol.head(n);
    nu = p ? Eigen::VectorXd(sol.tail(p)) : Eigen::VectorXd(0);
    if (mG) {
      Eigen::VectorXd slack = d.h - d.G * z;
      double shift = std::max(0.0, -slack.minCoeff()) + 1.0;
      s = slack.array() + shift;
      mu = Eigen::VectorXd::Ones(mG);
    } else {
      s.resize(0);
      mu.resize(0);
    }
  }

  if (mG == 0) {
    // Equality-constrained QP: the initialization solve is already the answer.
    Eigen::VectorXd rd = d.H * z + d.c;
    if (p) rd += d.A.transpose() * nu;
    res.status = SolveStatus::Optimal;
    res.z = z;
    res.nu = nu;
    res.mu.resize(0);
    res.objective = 0.5 * z.dot(d.H * z) + d.c.dot(z);
    res.dual_residual = rd.lpNorm<Eigen::Infinity>();
    res.primal_residual = p ? (d.A * z - d.b).lpNorm<Eigen::Infinity>() : 0.0;
    if (res.primal_residual > st.feas_tol * norm_b || res.dual_residual > 1e-6 * norm_c)
      res.status = SolveStatus::NumericalFailure;
    return res;
  }

  double last_obj = kInf;
  int stall = 0;
  const bool trace = std::getenv("CCTMPC_TRACE_IPM") != nullptr;
  struct Snapshot {
    Eigen::VectorXd z, nu, mu, s;
    double merit = kInf;
  } best;
  for (int iter = 0; iter < st.max_iter; ++iter) {
    Eigen::VectorXd rd = d.H * z + d.c + d.G.transpose() * mu;
    if (p) rd += d.A.transpose() * nu;
    Eigen::VectorXd rp = p ? Eigen::VectorXd(d.A * z - d.b) : Eigen::VectorXd(0);
    Eigen::VectorXd rg = d.G * z + s - d.h;
    double gap = s.dot(mu);
    double obj = 0.5 * z.dot(d.H * z) + d.c.dot(z);
    if (trace)
      std::fprintf(stderr, "qp it=%d gap=%.3e rp=%.3e rg=%.3e rd=%.3e obj=%.12e\n", iter, gap,
                   p ? rp.lpNorm<Eigen::Infinity>() : 0.0, rg.lpNorm<Eigen::Infinity>(),
                   rd.lpNorm<Eigen::Infinity>(), obj);
    {
      double merit = (p ? rp.lpNorm<Eigen::Infinity>() : 0.0) / norm_b +
                     rg.lpNorm<Eigen::Infinity>() / norm_h +
                     rd.lpNorm<Eigen::Infinity>() / norm_c + gap / (1.0 + std::abs(obj));
      if (merit < best.merit) best = Snapshot{z, nu, mu, s, merit};
    }

    auto declare_optimal = [&](double relax) {
      bool feas_ok = (p == 0 || rp.lpNorm<Eigen::Infinity>() <= relax * st.feas_tol * norm_b) &&
                     rg.lpNorm<Eigen::Infinity>() <= relax * st.feas_tol * norm_h;
      bool dual_ok = rd.lpNorm<Eigen::Infinity>() <=
                     relax * st.stat_tol * (norm_c + (d.H * z).lpNorm<Eigen::Infinity>());
      bool gap_ok = gap <= relax * st.comp_tol * (1.0 + std::abs(obj));
      if (!(feas_ok && dual_ok && gap_ok)) return false;
      res.status = SolveStatus::Optimal;
      res.z = z;
      res.mu = mu;
      res.nu = nu;
      res.objective = obj;
      res.iterations = iter;
      res.primal_residual = std::max(p ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                     std::max(0.0, (d.G * z - d.h).maxCoeff()));
      res.dual_residual = rd.lpNorm<Eigen::Infinity>();
      res.complementarity = (s.array() * mu.array()).maxCoeff();
      polish_kkt(d.H, d.c, d.G, d.h, d.A, d.b, s, mu, /*require_improvement=*/true, res);
      return true;
    };
    if (declare_optimal(1.0)) return res;

    // Divergence guard; classified by the caller.
    if (obj < -1e14 || !std::isfinite(obj)) break;
    if (!conservative) {
      if (std::abs(obj - last_obj) < 1e-16 * (1.0 + std::abs(obj))) {
        if (++stall > 8) break;
      } else {
        stall = 0;
      }
      last_obj = obj;
    }

    Eigen::VectorXd dvec =
        (mu.array().max(1e-300) / s.array().max(1e-300)).min(1e12).max(1e-12).matrix();
    if (!kkt.factorize(dvec)) {
      if (declare_optimal(10.0)) return res;
      break;
    }

    auto newton = [&](const Eigen::VectorXd& rs, Eigen::VectorXd& dz, Eigen::VectorXd& dnu,
                      Eigen::VectorXd& dmu, Eigen::VectorXd& ds) {
      Eigen::VectorXd Sinv_rs = rs.array() / s.array();
      Eigen::VectorXd rhs(n + p);
      // eliminating ds = -rg - G dz gives dmu = Sinv rs + D rg + D G dz
      rhs.head(n) = -rd - d.G.transpose() * (Sinv_rs + dvec.cwiseProduct(rg));
      if (p) rhs.tail(p) = -rp;
      Eigen::VectorXd sol = kkt.solve(rhs);
      dz = sol.head(n);
      dnu = p ? Eigen::VectorXd(sol.tail(p)) : Eigen::VectorXd(0);
      ds = -rg - d.G * dz;
      dmu = Sinv_rs - dvec.cwiseProduct(ds);
    };

    Eigen::VectorXd dz, dnu, dmu, ds;
    double alpha;
    if (conservative) {
      // damped fixed-centering step
      Eigen::VectorXd rs = (0.3 * (gap / mG) - (s.array() * mu.array())).matrix();
      newton(rs, dz, dnu, dmu, ds);
      alpha = std::min({1.0, step_to_boundary(s, ds), step_to_boundary(mu, dmu)});
      alpha = std::min(1.0, 0.9 * alpha);
      if (trace) std::fprintf(stderr, "      conservative alpha=%.3e\n", alpha);
    } else {
      // Predictor.
      Eigen::VectorXd rs_aff = -(s.array() * mu.array()).matrix();
      newton(rs_aff, dz, dnu, dmu, ds);
      double alpha_aff = std::min({1.0, step_to_boundary(s, ds), step_to_boundary(mu, dmu)});
      double gap_aff = (s + alpha_aff * ds).dot(mu + alpha_aff * dmu);
      double sigma = std::clamp(std::pow(gap_aff / gap, 3), 1e-8, 1.0);

      // Corrector.
      Eigen::VectorXd rs =
          (sigma * (gap / mG) - (s.array() * mu.array()) - (ds.array() * dmu.array())).matrix();
      newton(rs, dz, dnu, dmu, ds);
      alpha = std::min({1.0, step_to_boundary(s, ds), step_to_boundary(mu, dmu)});
      alpha = std::min(1.0, 0.99 * alpha);
      if (trace)
        std::fprintf(stderr, "      alpha_aff=%.3e sigma=%.3e alpha=%.3e\n", alpha_aff, sigma,
                     alpha);
    }
    if (!std::isfinite(alpha) || alpha <= 1e-14) {
      if (declare_optimal(10.0)) return res;
      break;
    }

    z += alpha * dz;
    if (p) nu += alpha * dnu;
    s += alpha * ds;
    mu += alpha * dmu;

    // Weakly active constraints leave pairs with both components tiny; their
    // next centering correction would blow up (target / s_i). Scaling such a
    // pair up toward the central path keeps the Newton system sane; the
    // induced residual is absorbed by the infeasible-start iteration and
    // vanishes with the gap.
    double avg = s.dot(mu) / mG;
    double lift = std::sqrt(1e-4 * avg);
    for (int i = 0; i < mG; ++i) {
      double prod = s[i] * mu[i];
      // only pairs with BOTH components collapsed are dangerous; inactive
      // rows (large slack, vanishing dual) are healthy and stay untouched
      if (prod > 0.0 && prod < 1e-4 * avg && s[i] < lift && mu[i] < lift) {
        double f = std::sqrt(1e-4 * avg / prod);
        s[i] *= f;
        mu[i] *= f;
      }
    }
  }

  // Stalled or out of iterations: the primal iterate is often already at the
  // optimal face with only the duals wandering, so try an exact active-set
  // solve before giving up, preferring the best iterate seen.
  res.objective = kInf;
  if (best.merit < kInf && best.s.allFinite() && best.mu.allFinite() &&
      polish_kkt(d.H, d.c, d.G, d.h, d.A, d.b, best.s, best.mu, /*require_improvement=*/false,
                 res)) {
    res.iterations = st.max_iter;
    return res;
  }
  if (s.size() && s.allFinite() && mu.allFinite() &&
      polish_kkt(d.H, d.c, d.G, d.h, d.A, d.b, s, mu, /*require_improvement=*/false, res)) {
    res.iterations = st.max_iter;
    return res;
  }
  res.status = SolveStatus::NumericalFailure;
  res.iterations = st.max_iter;
  res.z = z;
  return res;
}

// Phase-1 classification for QPs the interior-point loop could not finish:
//   min t  s.t.  G z <= h + t*1,  A z = b,  t >= -1.
// t* > tol certifies infeasibility of the constraint system.
SolveStatus classify_constraints(const QpData& d, const SolverSettings& st, bool diverged) {
  const int n = static_cast<int>(d.c.size());
  const int mG = static_cast<int>(d.G.rows());

  LpData lp;
  lp.c.setZero(n + 1);
  lp.c[n] = 1.0;
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < d.G.outerSize(); ++k) {
    for (SpMat::InnerIterator it(d.G, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  for (int r = 0; r < mG; ++r) trip.emplace_back(r, n, -1.0);
  trip.emplace_back(mG, n, -1.0);  // t >= -1
  lp.G.resize(mG + 1, n + 1);
  lp.G.setFromTriplets(trip.begin(), trip.end());
  lp.h.resize(mG + 1);
  lp.h.head(mG) = d.h;
  lp.h[mG] = 1.0;
  std::vector<Eigen::Triplet<double>> atrip;
  for (int k = 0; k < d.A.outerSize(); ++k) {
    for (SpMat::InnerIterator it(d.A, k); it; ++it) atrip.emplace_back(it.row(), it.col(), it.value());
  }
  lp.A.resize(d.A.rows(), n + 1);
  lp.A.setFromTriplets(atrip.begin(), atrip.end());
  lp.b = d.b;

  SolverSettings phase1 = st;
  phase1.primal_hint.reset();
  SolveResult r = solve_lp_hsd(lp, phase1);
  if (r.status == SolveStatus::Infeasible) return SolveStatus::Infeasible;  // equality block itself
  if (r.status == SolveStatus::Optimal) {
    double scale = 1.0 + (mG ? d.h.lpNorm<Eigen::Infinity>() : 0.0);
    if (r.z[n] > st.feas_tol * scale * 10.0) return SolveStatus::Infeasible;
    return diverged ? SolveStatus::Unbounded : SolveStatus::NumericalFailure;
  }
  return SolveStatus::NumericalFailure;
}

// Ruiz equilibration of the stacked data [H G' A'; G 0 0; A 0 0] plus a cost
// normalization. Interior-point behavior is very sensitive to mixed scales
// (Tikhonov-small Hessian entries against large multiplier-sized costs), and
// equilibrated problems converge in a fraction of the iterations.
struct Equilibration {
  Eigen::VectorXd d;   // variable scaling, z = d .* z_tilde
  Eigen::VectorXd eg;  // inequality row scaling
  Eigen::VectorXd ea;  // equality row scaling
  double cost = 1.0;   // objective scaling factor
};

Equilibration equilibrate(SpMat& H, Eigen::VectorXd& c, SpMat& G, Eigen::VectorXd& h, SpMat& A,
                          Eigen::VectorXd& b) {
  const int n = static_cast<int>(c.size());
  const int mG = static_cast<int>(G.rows());
  const int p = static_cast<int>(A.rows());
  Equilibration eq;
  eq.d.setOnes(n);
  eq.eg.setOnes(mG);
  eq.ea.setOnes(p);

  auto scan_cols = [&](Eigen::VectorXd& col_norm) {
    col_norm.setZero(n);
    for (int k = 0; k < H.outerSize(); ++k)
      for (SpMat::InnerIterator it(H, k); it; ++it)
        col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
    for (int k = 0; k < G.outerSize(); ++k)
      for (SpMat::InnerIterator it(G, k); it; ++it)
        col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
  };
  auto scan_rows = [&](const SpMat& M, Eigen::VectorXd& row_norm) {
    row_norm.setZero(M.rows());
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it)
        row_norm[it.row()] = std::max(row_norm[it.row()], std::abs(it.value()));
  };

  // Well-scaled data skips the whole pass; the rebuilds are not free on the
  // many small geometry subproblems.
  Eigen::VectorXd col_norm, grow, arow;
  {
    scan_cols(col_norm);
    scan_rows(G, grow);
    scan_rows(A, arow);
    auto in_band = [](const Eigen::VectorXd& v) {
      for (int i = 0; i < v.size(); ++i)
        if (v[i] > 1e-12 && (v[i] < 0.25 || v[i] > 4.0)) return false;
      return true;
    };
    double cmax = c.lpNorm<Eigen::Infinity>();
    if (in_band(col_norm) && in_band(grow) && in_band(arow) && cmax < 16.0) return eq;
  }
  for (int pass = 0; pass < 5; ++pass) {
    scan_cols(col_norm);
    scan_rows(G, grow);
    scan_rows(A, arow);
    Eigen::VectorXd dv(n), dg(mG), da(p);
    for (int j = 0; j < n; ++j) dv[j] = col_norm[j] > 1e-12 ? 1.0 / std::sqrt(col_norm[j]) : 1.0;
    for (int i = 0; i < mG; ++i) dg[i] = grow[i] > 1e-12 ? 1.0 / std::sqrt(grow[i]) : 1.0;
    for (int i = 0; i < p; ++i) da[i] = arow[i] > 1e-12 ? 1.0 / std::sqrt(arow[i]) : 1.0;
    H = dv.asDiagonal() * H * dv.asDiagonal();
    c = dv.asDiagonal() * c;
    G = dg.asDiagonal() * G * dv.asDiagonal();
    h = dg.asDiagonal() * h;
    A = da.asDiagonal() * A * dv.asDiagonal();
    b = da.asDiagonal() * b;
    eq.d = eq.d.cwiseProduct(dv);
    eq.eg = eq.eg.cwiseProduct(dg);
    eq.ea = eq.ea.cwiseProduct(da);
    double worst = 0.0;
    for (int j = 0; j < n; ++j)
      if (col_norm[j] > 1e-12) worst = std::max(worst, std::abs(std::log(col_norm[j])));
    if (worst < 0.1) break;
  }

  double cscale = std::max(c.lpNorm<Eigen::Infinity>(), 1e-6);
  double hnorm = 0.0;
  for (int k = 0; k < H.outerSize(); ++k)
    for (SpMat::InnerIterator it(H, k); it; ++it) hnorm = std::max(hnorm, std::abs(it.value()));
  eq.cost = 1.0 / std::max(1.0, std::max(cscale, hnorm));
  H *= eq.cost;
  c *= eq.cost;
  return eq;
}

void unscale_result(const Equilibration& eq, SolveResult& res) {
  if (res.z.size() == eq.d.size()) res.z = eq.d.cwiseProduct(res.z);
  if (res.mu.size() == eq.eg.size()) res.mu = eq.eg.cwiseProduct(res.mu) / eq.cost;
  if (res.nu.size() == eq.ea.size()) res.nu = eq.ea.cwiseProduct(res.nu) / eq.cost;
  res.objective /= eq.cost;
}

}  // namespace

bool nonnegative_least_squares(const Eigen::MatrixXd& M, const Eigen::MatrixXd& F,
                               const Eigen::VectorXd& g, Eigen::VectorXd& x, Eigen::VectorXd& y,
                               int max_iter) {
  return nnls_with_free(M, F, g, x, y, max_iter);
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

void LinearProgram::validate() const {
  if (!all_finite(c)) throw std::invalid_argument("cost vector has non-finite entries");
  check_block_dims(num_vars(), G, h, A, b, lb, ub);
}

void QuadraticProgram::validate() const {
  if (!all_finite(c)) throw std::invalid_argument("cost vector has non-finite entries");
  if (H.rows() != num_vars() || H.cols() != num_vars())
    throw std::invalid_argument("cost matrix dimension mismatch");
  if (!all_finite(H)) throw std::invalid_argument("cost matrix has non-finite entries");
  check_block_dims(num_vars(), G, h, A, b, lb, ub);
}

void QuadraticProgram::validate_cost_matrix() const {
  Eigen::MatrixXd Hd = Eigen::MatrixXd(H);
  double scale = std::max(1.0, Hd.cwiseAbs().maxCoeff());
  if ((Hd - Hd.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("cost matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Hd + Hd.transpose()),
                                                     Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale)
    throw std::invalid_argument("cost matrix is not positive semidefinite");
}

SolveResult ReferenceSolver::solve(const LinearProgram& lp, const SolverSettings& settings) const {
  lp.validate();
  FoldedIneq f = fold_bounds(lp.num_vars(), lp.G, lp.h, lp.lb, lp.ub);
  SpMat H0(lp.num_vars(), lp.num_vars());
  SpMat G = std::move(f.G);
  SpMat A = lp.A;
  if (A.rows() == 0) A.resize(0, lp.num_vars());
  Eigen::VectorXd c = lp.c, h = std::move(f.h), b = lp.b;
  Equilibration eq = equilibrate(H0, c, G, h, A, b);
  LpData d{std::move(c), std::move(G), std::move(h), std::move(A), std::move(b)};
  SolveResult r = solve_lp_hsd(d, settings);
  unscale_result(eq, r);
  return r;
}

SolveResult ReferenceSolver::solve(const QuadraticProgram& qp, const SolverSettings& settings) const {
  qp.validate();
  FoldedIneq f = fold_bounds(qp.num_vars(), qp.G, qp.h, qp.lb, qp.ub);
  SpMat H = qp.H;
  SpMat G = std::move(f.G);
  SpMat A = qp.A;
  if (A.rows() == 0) A.resize(0, qp.num_vars());
  Eigen::VectorXd c = qp.c, h = std::move(f.h), b = qp.b;
  Equilibration eq = equilibrate(H, c, G, h, A, b);
  QpData d{H, c, std::move(G), std::move(h), std::move(A), std::move(b)};
  SolveResult r = solve_qp_ipm(d, settings, /*conservative=*/false);
  if (r.status == SolveStatus::NumericalFailure) {
    SolverSettings retry = settings;
    retry.max_iter = std::max(settings.max_iter, 400);
    r = solve_qp_ipm(d, retry, /*conservative=*/true);
  }
  if (r.status == SolveStatus::NumericalFailure) {
    bool diverged = r.z.size() > 0 && r.z.allFinite() &&
                    (0.5 * r.z.dot(d.H * r.z) + d.c.dot(r.z)) < -1e12;
    r.status = classify_constraints(d, settings, diverged);
    r.has_certificate = r.status == SolveStatus::Infeasible;
  }
  unscale_result(eq, r);
  return r;
}

SolveResult solve_lp(const LinearProgram& lp, const SolverSettings& settings) {
  return ReferenceSolver().solve(lp, settings);
}

SolveResult solve_qp(const QuadraticProgram& qp, const SolverSettings& settings) {
  return ReferenceSolver().solve(qp, settings);
}

}  // namespace cctmpc
