// latctl — iterative LQR trajectory optimization in latent space:
// backward Riccati sweeps over local linearizations with Levenberg
// regularization, and a backtracking feedback-rollout line search.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/ctrl/cost.hpp"
#include "latctl/ctrl/linearize.hpp"
#include "latctl/errors.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace latctl {

// A finite-horizon latent control problem: reach-and-hold the cost's goal
// over T states (T-1 controls), starting from z_start, under the given
// dynamics, with every control confined to the box [u_lo, u_hi].
struct ControlProblem {
  Vec z_start;
  int T = 1;
  LatentCost cost;
  LatentDynamics dynamics;
  Vec u_lo;
  Vec u_hi;

  void validate() const {
    cost.validate();
    if (z_start.size() != cost.z_goal.size())
      throw ValidationError("ControlProblem: z_start dimension does not match the cost");
    if (T < 1) throw ValidationError("ControlProblem: horizon must be at least 1");
    if (u_lo.size() != u_hi.size())
      throw ValidationError("ControlProblem: control bounds disagree in length");
    if (u_lo.size() != cost.R_u.rows())
      throw ValidationError("ControlProblem: control bounds do not match R_u");
    for (Eigen::Index i = 0; i < u_lo.size(); ++i)
      if (!(u_lo[i] <= u_hi[i])) throw ValidationError("ControlProblem: empty control box");
    if (!dynamics.step || !dynamics.local)
      throw ValidationError("ControlProblem: dynamics callbacks not set");
  }
};

// An optimized plan. Z holds T states (column t = z_t), U the T-1 controls
// actually used in the accepted rollout (already clamped to the box). The
// feedback law (k, K) of the final backward pass is kept so callers can
// warm-start or replay the plan.
struct Trajectory {
  Mat Z;
  Mat U;
  double cost = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<Vec> k;
  std::vector<Mat> K;
};

struct IlqrOptions {
  int max_iters = 100;
  double rel_tol = 1e-6;       // improvement / max(1, |cost|) below this stops
  double reg_init = 1e-6;
  double reg_min = 1e-6;
  double reg_max = 1e6;
  int backtrack_steps = 11;    // step sizes 1, 1/2, ..., 2^-10
};

namespace detail {

struct BackwardPass {
  std::vector<Vec> k;
  std::vector<Mat> K;
  bool ok = false;
};

// Open-loop or feedback rollout; cost is the true (non-quadraticized) cost.
// `alpha` scales the feedforward term; Z_ref/U_ref are the expansion points
// for the feedback term. Returns +inf cost when the rollout leaves the
// finite range.
inline double rollout(const ControlProblem& p, const Mat& Z_ref, const Mat& U_ref,
                      const std::vector<Vec>& k, const std::vector<Mat>& K, double alpha,
                      Mat& Z_out, Mat& U_out) {
  const int T = p.T;
  const int n_u = static_cast<int>(p.u_lo.size());
  Z_out.resize(p.z_start.size(), T);
  U_out.resize(n_u, T - 1);
  Vec z = p.z_start;
  double cost = 0.0;
  for (int t = 0; t < T - 1; ++t) {
    Z_out.col(t) = z;
    Vec u = U_ref.col(t);
    if (!k.empty()) u += alpha * k[t] + K[t] * (z - Z_ref.col(t));
    u = clamp(u, p.u_lo, p.u_hi);
    U_out.col(t) = u;
    cost += quad_cost(z, u, p.cost);
    z = p.dynamics.step(z, u);
    if (!all_finite(z)) return std::numeric_limits<double>::infinity();
  }
  Z_out.col(T - 1) = z;
  cost += state_cost(z, p.cost);
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
}

// Riccati-style backward sweep over the local models, with Levenberg
// regularization `reg` added to the control curvature. Fails (for the caller
// to escalate reg) if any regularized control curvature is not positive
// definite.
inline BackwardPass backward_pass(const ControlProblem& p, const Mat& Z, const Mat& U,
                                  const std::vector<LocalDynamics>& lin, double reg) {
  const int T = p.T;
  const int n_u = static_cast<int>(p.u_lo.size());
  BackwardPass bp;
  bp.k.assign(T - 1, Vec());
  bp.K.assign(T - 1, Mat());

  StateCostModel term = state_cost_model(Z.col(T - 1), p.cost);
  Vec V_z = term.grad;
  Mat V_zz = term.hess;
  const Mat regI = reg * Mat::Identity(n_u, n_u);

  for (int t = T - 2; t >= 0; --t) {
    const LocalDynamics& ld = lin[t];
    const StateCostModel sc = state_cost_model(Z.col(t), p.cost);
    const Vec u = U.col(t);

    const Vec Q_z = sc.grad + ld.A.transpose() * V_z;
    const Vec Q_u = 2.0 * (p.cost.R_u * u) + ld.B.transpose() * V_z;
    const Mat AtV = ld.A.transpose() * V_zz;
    const Mat Q_zz = sc.hess + AtV * ld.A;
    const Mat Q_uz = ld.B.transpose() * V_zz * ld.A;
    Mat Q_uu = 2.0 * p.cost.R_u + ld.B.transpose() * V_zz * ld.B + regI;
    Q_uu = 0.5 * (Q_uu + Q_uu.transpose());

    Eigen::LLT<Mat> llt(Q_uu);
    if (llt.info() != Eigen::Success) return bp;  // not PD: escalate reg
    bp.k[t] = -llt.solve(Q_u);
    bp.K[t] = -llt.solve(Q_uz);

    V_z = Q_z + bp.K[t].transpose() * (Q_uu * bp.k[t]) + bp.K[t].transpose() * Q_u +
          Q_uz.transpose() * bp.k[t];
    V_zz = Q_zz + bp.K[t].transpose() * Q_uu * bp.K[t] + bp.K[t].transpose() * Q_uz +
           Q_uz.transpose() * bp.K[t];
    V_zz = 0.5 * (V_zz + V_zz.transpose());
  }
  bp.ok = true;
  return bp;
}

}  // namespace detail

// Optimize the problem starting from the control sequence U_init
// (n_u × (T-1); columns are clamped to the box before use). Accepted
// iterations are strictly monotone in cost, so the result never costs more
// than the U_init rollout. `converged` is false only when the iteration cap
// ran out while full steps were still improving the cost by more than the
// relative tolerance.
inline Trajectory ilqr(const ControlProblem& p, const Mat& U_init,
                       const IlqrOptions& opt = IlqrOptions{}) {
  p.validate();
  const int T = p.T;
  const int n_u = static_cast<int>(p.u_lo.size());
  if (U_init.cols() != T - 1 || (T > 1 && U_init.rows() != n_u))
    throw ValidationError("ilqr: U_init must be n_u x (T-1)");

  Trajectory best;
  if (T == 1) {
    best.Z = Mat(p.z_start.size(), 1);
    best.Z.col(0) = p.z_start;
    best.U = Mat(n_u, 0);
    best.cost = state_cost(p.z_start, p.cost);
    best.converged = true;
    return best;
  }

  Mat U = U_init;
  for (int t = 0; t < T - 1; ++t) U.col(t) = clamp(U.col(t), p.u_lo, p.u_hi);
  Mat Z;
  {
    Mat U_roll;
    best.cost = detail::rollout(p, Mat(), U, {}, {}, 0.0, Z, U_roll);
    U = U_roll;
  }
  if (!std::isfinite(best.cost))
    throw NumericError("ilqr: initial rollout diverged to non-finite values");
  best.Z = Z;
  best.U = U;

  double reg = opt.reg_init;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    best.iterations = iter;

    std::vector<LocalDynamics> lin;
    lin.reserve(T - 1);
    for (int t = 0; t < T - 1; ++t) lin.push_back(p.dynamics.local(best.Z.col(t), best.U.col(t)));

    detail::BackwardPass bp = detail::backward_pass(p, best.Z, best.U, lin, reg);
    if (!bp.ok) {
      if (reg >= opt.reg_max) {
        best.converged = true;  // cannot improve further at maximum damping
        break;
      }
      reg = std::min(reg * 10.0, opt.reg_max);
      continue;
    }

    // A step is taken only when it improves the cost by at least the
    // termination threshold. Stopping by *rejecting* the final sub-threshold
    // step (instead of taking it) makes the solver idempotent: re-running on
    // its own solution reproduces the rejection and returns it unchanged.
    const double threshold = opt.rel_tol * std::max(1.0, std::abs(best.cost));
    bool accepted = false;
    double alpha = 1.0;
    Mat Z_new, U_new;
    double closest = std::numeric_limits<double>::infinity();
    for (int s = 0; s < opt.backtrack_steps; ++s, alpha *= 0.5) {
      const double cost_new = detail::rollout(p, best.Z, best.U, bp.k, bp.K, alpha, Z_new, U_new);
      closest = std::min(closest, cost_new);
      if (cost_new <= best.cost - threshold) {
        best.Z = std::move(Z_new);
        best.U = std::move(U_new);
        best.cost = cost_new;
        best.k = std::move(bp.k);
        best.K = std::move(bp.K);
        accepted = true;
        break;
      }
    }

    if (accepted) {
      reg = std::max(reg * 0.5, opt.reg_min);
      continue;
    }
    if (closest <= best.cost || reg >= opt.reg_max) {
      // Improvement exists but is below the termination threshold (or the
      // damping budget is exhausted): the trajectory is as converged as the
      // tolerance asks for.
      best.converged = true;
      break;
    }
    // Every candidate made things worse: the local model is untrustworthy at
    // this damping level.
    reg = std::min(reg * 10.0, opt.reg_max);
  }

  if (best.k.empty()) {
    // Never accepted a step (already optimal): keep a usable feedback law.
    std::vector<LocalDynamics> lin;
    for (int t = 0; t < T - 1; ++t) lin.push_back(p.dynamics.local(best.Z.col(t), best.U.col(t)));
    detail::BackwardPass bp = detail::backward_pass(p, best.Z, best.U, lin, opt.reg_min);
    if (bp.ok) {
      best.k = std::move(bp.k);
      best.K = std::move(bp.K);
    }
  }
  return best;
}

}  // namespace latctl
