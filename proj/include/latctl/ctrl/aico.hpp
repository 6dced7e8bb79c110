// latctl — approximate-inference trajectory optimization: the control
// problem becomes a Gaussian chain whose MAP trajectory is extracted by
// message passing (forward filter, backward cost-to-go, task potentials),
// iterated with damped relinearization.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/ctrl/cost.hpp"
#include "latctl/ctrl/ilqr.hpp"
#include "latctl/ctrl/linearize.hpp"
#include "latctl/errors.hpp"

#include <cmath>
#include <vector>

namespace latctl {

struct AicoOptions {
  int max_sweeps = 100;
  double mean_shift_tol = 1e-6;  // largest per-state belief-mean move that counts as converged
  double damping = 0.9;          // fraction of the belief-mean step adopted per sweep
  double start_precision = 1e12; // pins the first state to z_start
  double jitter = 1e-9;          // added to near-singular message covariances (flagged)
};

struct AicoResult {
  Trajectory trajectory;
  int sweeps = 0;
  bool jitter_applied = false;
};

namespace detail {

// Invert a symmetric PSD matrix; on failure add `jitter` to the diagonal and
// record that it happened.
inline Mat psd_inverse(Mat S, double jitter, bool& jitter_applied) {
  const Eigen::Index n = S.rows();
  Eigen::LLT<Mat> llt(S);
  if (llt.info() != Eigen::Success) {
    jitter_applied = true;
    S += jitter * Mat::Identity(n, n);
    llt.compute(S);
    if (llt.info() != Eigen::Success)
      throw NumericError("aico: message covariance not positive definite even after jitter");
  }
  return llt.solve(Mat::Identity(n, n));
}

}  // namespace detail

// Solve the problem by Gaussian message passing. The chain has one node per
// latent state; three potentials meet at node t:
//   forward  — cost-to-come filtered through the dynamics, with the control
//              penalty acting as a zero-mean Gaussian prior of precision 2R_u
//              and the per-step noise C_t widening the prediction;
//   task     — the local quadratic model of the state cost (precision
//              2R_z plus the obstacle Gauss-Newton term);
//   backward — cost-to-go with controls eliminated, a Riccati-style
//              information-form recursion (independent of C_t).
// Belief means (precision-weighted combinations) give the next linearization
// points; nominals move a damped fraction toward them each sweep until the
// largest mean shift drops below tolerance.
//
// The returned trajectory is the deterministic clamped rollout of the true
// dynamics under the final backward pass's affine control law, so its cost is
// measured exactly like an iLQR trajectory's.
//
// `noise` overrides the per-step process covariance: empty uses each local
// model's own C, one matrix broadcasts to every step, otherwise supply T-1.
inline AicoResult aico(const ControlProblem& p, const Mat& U_init,
                       const std::vector<Mat>& noise = {},
                       const AicoOptions& opt = AicoOptions{}) {
  p.validate();
  const int T = p.T;
  const int n_z = static_cast<int>(p.z_start.size());
  const int n_u = static_cast<int>(p.u_lo.size());
  if (U_init.cols() != T - 1 || (T > 1 && U_init.rows() != n_u))
    throw ValidationError("aico: U_init must be n_u x (T-1)");
  if (!noise.empty() && noise.size() != 1 && noise.size() != static_cast<std::size_t>(T - 1))
    throw ValidationError("aico: noise must be empty, a single matrix, or one per step");

  AicoResult out;
  if (T == 1) {
    out.trajectory.Z = Mat(n_z, 1);
    out.trajectory.Z.col(0) = p.z_start;
    out.trajectory.U = Mat(n_u, 0);
    out.trajectory.cost = state_cost(p.z_start, p.cost);
    out.trajectory.converged = true;
    return out;
  }

  // Nominal trajectory: open-loop rollout of the (clamped) initial controls.
  Mat U_nom = U_init;
  for (int t = 0; t < T - 1; ++t) U_nom.col(t) = clamp(U_nom.col(t), p.u_lo, p.u_hi);
  Mat Z_nom;
  {
    Mat U_roll;
    const double c0 = detail::rollout(p, Mat(), U_nom, {}, {}, 0.0, Z_nom, U_roll);
    if (!std::isfinite(c0)) throw NumericError("aico: initial rollout diverged");
    U_nom = U_roll;
  }

  const Mat Ru2 = 2.0 * p.cost.R_u;
  const Mat Ru2_inv = [&] {
    Eigen::LLT<Mat> llt(Ru2);
    if (llt.info() != Eigen::Success)
      throw ValidationError("aico: R_u must be positive definite");
    return Mat(llt.solve(Mat::Identity(n_u, n_u)));
  }();

  // Control law of the latest backward pass, in absolute coordinates:
  // u_t(z) = c_abs[t] + K_fin[t] z.
  std::vector<Vec> c_abs(T - 1, Vec::Zero(n_u));
  std::vector<Mat> K_fin(T - 1, Mat::Zero(n_u, n_z));
  bool converged = false;

  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    out.sweeps = sweep;

    // Local models along the nominal trajectory.
    std::vector<LocalDynamics> lin;
    lin.reserve(T - 1);
    for (int t = 0; t < T - 1; ++t) lin.push_back(p.dynamics.local(Z_nom.col(t), U_nom.col(t)));
    std::vector<Mat> C(T - 1);
    for (int t = 0; t < T - 1; ++t)
      C[t] = noise.empty() ? lin[t].C : (noise.size() == 1 ? noise[0] : noise[t]);

    // Task potentials: local quadratic state-cost models in information form,
    //   cost(z) ≈ ½ zᵀ R̂ z − r̂ᵀ z + const, R̂ = model.hess, r̂ = R̂ z̄ − model.grad.
    std::vector<Mat> R_hat(T);
    std::vector<Vec> r_hat(T);
    for (int t = 0; t < T; ++t) {
      const StateCostModel sc = state_cost_model(Z_nom.col(t), p.cost);
      R_hat[t] = sc.hess;
      r_hat[t] = sc.hess * Z_nom.col(t) - sc.grad;
    }

    // Backward cost messages, information form. W_t(z) = ½ zᵀ G_t z − g_tᵀ z is
    // the cost-to-go strictly beyond node t (task at t excluded), after
    // eliminating each control against its 2R_u prior:
    //   W_t(z) = min_u [ ½ uᵀ(2R_u)u + V_{t+1}(A z + B u + o) ],
    //   V_t = W_t + task_t,  V_T = task_T.
    std::vector<Mat> G(T);
    std::vector<Vec> g(T);
    G[T - 1] = Mat::Zero(n_z, n_z);
    g[T - 1] = Vec::Zero(n_z);
    {
      Mat F = R_hat[T - 1];
      Vec f = r_hat[T - 1];
      for (int t = T - 2; t >= 0; --t) {
        const Mat& A = lin[t].A;
        const Mat& B = lin[t].B;
        const Vec& o = lin[t].o;
        Mat H = Ru2 + B.transpose() * F * B;
        H = 0.5 * (H + H.transpose());
        Eigen::LLT<Mat> llt(H);
        if (llt.info() != Eigen::Success) {
          out.jitter_applied = true;
          H += opt.jitter * Mat::Identity(n_u, n_u);
          llt.compute(H);
          if (llt.info() != Eigen::Success)
            throw NumericError("aico: control elimination failed");
        }
        const Mat BtFA = B.transpose() * F * A;
        const Vec E = F * o - f;
        // Optimal control law for this quadratic stage, in absolute coordinates:
        //   u*(z) = −H⁻¹ (BᵀFA z + BᵀE).
        K_fin[t] = -llt.solve(BtFA);
        c_abs[t] = -llt.solve(B.transpose() * E);

        G[t] = A.transpose() * F * A - BtFA.transpose() * llt.solve(BtFA);
        G[t] = 0.5 * (G[t] + G[t].transpose());
        g[t] = (A.transpose() - BtFA.transpose() * llt.solve(B.transpose())) * (f - F * o);
        F = G[t] + R_hat[t];
        F = 0.5 * (F + F.transpose());
        f = g[t] + r_hat[t];
      }
    }

    // Forward filter messages, covariance form. The first state is pinned to
    // z_start; each prediction widens by the control prior and process noise:
    //   Ŝ_t = (S_t⁻¹ + R̂_t)⁻¹,  ŝ_t = Ŝ_t (S_t⁻¹ s_t + r̂_t)
    //   S_{t+1} = A Ŝ_t Aᵀ + B (2R_u)⁻¹ Bᵀ + C_t,  s_{t+1} = A ŝ_t + o.
    std::vector<Mat> S_inv(T);
    std::vector<Vec> S_inv_s(T);
    {
      Mat S = (1.0 / opt.start_precision) * Mat::Identity(n_z, n_z);
      Vec s = p.z_start;
      for (int t = 0; t < T; ++t) {
        S_inv[t] = detail::psd_inverse(S, opt.jitter, out.jitter_applied);
        S_inv_s[t] = S_inv[t] * s;
        if (t == T - 1) break;
        const Mat P_hat = S_inv[t] + R_hat[t];
        const Mat S_hat = detail::psd_inverse(P_hat, opt.jitter, out.jitter_applied);
        const Vec s_hat = S_hat * (S_inv_s[t] + r_hat[t]);
        const Mat& A = lin[t].A;
        const Mat& B = lin[t].B;
        S = A * S_hat * A.transpose() + B * Ru2_inv * B.transpose() + C[t];
        S = 0.5 * (S + S.transpose());
        s = A * s_hat + lin[t].o;
      }
    }

    // Beliefs: precision-weighted combination of the three potentials.
    double shift = 0.0;
    Mat Z_new = Z_nom;
    for (int t = 0; t < T; ++t) {
      Mat P = S_inv[t] + R_hat[t] + G[t];
      P = 0.5 * (P + P.transpose());
      Eigen::LLT<Mat> llt(P);
      if (llt.info() != Eigen::Success) {
        out.jitter_applied = true;
        P += opt.jitter * Mat::Identity(n_z, n_z);
        llt.compute(P);
        if (llt.info() != Eigen::Success)
          throw NumericError("aico: belief precision not positive definite");
      }
      const Vec mean = llt.solve(S_inv_s[t] + r_hat[t] + g[t]);
      shift = std::max(shift, (mean - Z_nom.col(t)).norm());
      Z_new.col(t) = Z_nom.col(t) + opt.damping * (mean - Z_nom.col(t));
    }
    Z_new.col(0) = p.z_start;

    // Refresh nominal controls from the new linearization points.
    for (int t = 0; t < T - 1; ++t)
      U_nom.col(t) = clamp(Vec(c_abs[t] + K_fin[t] * Z_new.col(t)), p.u_lo, p.u_hi);
    Z_nom = Z_new;

    if (shift < opt.mean_shift_tol) {
      converged = true;
      break;
    }
  }

  // Executable plan: deterministic rollout of the true dynamics under the
  // final affine control law, clamped to the admissible box. The rollout
  // wants the law in deviation form around the final nominals.
  std::vector<Vec> k_fin(T - 1);
  for (int t = 0; t < T - 1; ++t)
    k_fin[t] = c_abs[t] + K_fin[t] * Z_nom.col(t) - U_nom.col(t);
  Trajectory& traj = out.trajectory;
  Mat Z_fin, U_fin;
  traj.cost = detail::rollout(p, Z_nom, U_nom, k_fin, K_fin, 1.0, Z_fin, U_fin);
  if (!std::isfinite(traj.cost)) throw NumericError("aico: final rollout diverged");
  traj.Z = std::move(Z_fin);
  traj.U = std::move(U_fin);
  traj.converged = converged;
  traj.iterations = out.sweeps;
  traj.k = std::move(k_fin);
  traj.K = std::move(K_fin);
  return out;
}

}  // namespace latctl
