// latctl — diagonal Gaussians and the closed-form KL divergences used by the
// latent-consistency objective.
// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/transition.hpp"

namespace latctl {

// Diagonal-covariance Gaussian stored as (mean, log standard deviation).
struct DiagGaussian {
  Vec mean;
  Vec log_std;

  Vec std() const { return log_std.array().exp().matrix(); }
  Vec var() const { return (2.0 * log_std.array()).exp().matrix(); }

  void validate() const {
    if (mean.size() != log_std.size())
      throw ValidationError("DiagGaussian: mean/log_std length mismatch");
    if (!all_finite(mean) || !all_finite(log_std))
      throw NumericError("DiagGaussian: non-finite parameters");
  }
};

// z = mu + exp(log_std) ⊙ eps.
inline Vec reparameterize(const DiagGaussian& q, const Vec& eps) {
  if (eps.size() != q.mean.size()) throw ValidationError("reparameterize: eps length mismatch");
  return q.mean.array() + q.log_std.array().exp() * eps.array();
}

// KL( N(mu, diag sigma²) ‖ N(0, I) ) = ½ Σ (sigma² + mu² − 1 − log sigma²).
inline double kl_to_standard_normal(const DiagGaussian& q) {
  q.validate();
  const auto var = (2.0 * q.log_std.array()).exp();
  return 0.5 * (var + q.mean.array().square() - 1.0 - 2.0 * q.log_std.array()).sum();
}

// KL( q1 ‖ q0 ) for two diagonal Gaussians (argument order: divergence OF q1
// FROM q0, i.e. the expectation is under q1).
inline double kl_diag(const DiagGaussian& q1, const DiagGaussian& q0) {
  q1.validate();
  q0.validate();
  if (q1.mean.size() != q0.mean.size()) throw ValidationError("kl_diag: size mismatch");
  const auto v1 = (2.0 * q1.log_std.array()).exp();
  const auto v0 = (2.0 * q0.log_std.array()).exp();
  const auto dm = (q1.mean - q0.mean).array();
  return 0.5 * (v1 / v0 + dm.square() / v0 - 1.0 + 2.0 * (q0.log_std - q1.log_std).array()).sum();
}

// Temporal-smoothness penalty: KL of the next frame's encoding from the
// current frame's encoding.
inline double slowness_penalty(const DiagGaussian& q_t, const DiagGaussian& q_next) {
  return kl_diag(q_next, q_t);
}

// KL( N(A mu0 + B u + o, A diag(sigma0²) Aᵀ) ‖ N(mu1, diag(sigma1²)) ) with
// A = I + v rᵀ, in closed form.  The rank-one structure collapses the trace to
// two weighted sums and the log-determinant to log(1 + vᵀr) via the matrix
// determinant lemma, so no dense matrix work is needed.
//
// When `strict` the function throws on 1 + vᵀr ≤ det_floor (the covariance
// would be singular/negative); the training loss instead clamps the log and
// adds a hinge penalty, which keeps the objective finite and differentiable.
inline double kl_rank_one_impl(const Vec& mu0, const Vec& log_std0, const RankOneTransition& tr,
                               const Vec& u, const Vec& mu1, const Vec& log_std1,
                               double det_floor, bool strict) {
  const Eigen::Index n = mu0.size();
  if (tr.v.size() != n || tr.r.size() != n || mu1.size() != n || log_std0.size() != n ||
      log_std1.size() != n || tr.o.size() != n || tr.B.rows() != n || tr.B.cols() != u.size())
    throw ValidationError("kl_rank_one: shape mismatch");
  const double det = 1.0 + tr.v.dot(tr.r);
  if (strict && det <= det_floor)
    throw NumericError("kl_rank_one: transition near singular (1 + v.r = " + std::to_string(det) + ")");
  const auto var0 = (2.0 * log_std0.array()).exp();
  const auto var1 = (2.0 * log_std1.array()).exp();
  // Pushed-forward mean A mu0 + B u + o, using A mu0 = mu0 + v (rᵀ mu0).
  const Vec mu_hat = mu0 + tr.v * tr.r.dot(mu0) + tr.B * u + tr.o;
  const auto delta = (mu1 - mu_hat).array();
  const double trace_diag = (var0 * (1.0 + 2.0 * tr.v.array() * tr.r.array()) / var1).sum();
  const double trace_cross = (tr.r.array().square() * var0).sum() * (tr.v.array().square() / var1).sum();
  const double maha = (delta.square() / var1).sum();
  const double log_det_ratio = 2.0 * (log_std1 - log_std0).sum() - 2.0 * std::log(std::max(det, det_floor));
  return 0.5 * (trace_diag + trace_cross + maha - static_cast<double>(n) + log_det_ratio);
}

inline double kl_rank_one(const DiagGaussian& q0, const RankOneTransition& tr, const Vec& u,
                          const DiagGaussian& q1, double det_floor = 1e-3) {
  q0.validate();
  q1.validate();
  return kl_rank_one_impl(q0.mean, q0.log_std, tr, u, q1.mean, q1.log_std, det_floor, true);
}

// One-step latent prediction: mean A mu + B u + o, covariance A Σ Aᵀ + diag(H).
// The covariance is dense (rank-one update of a diagonal), used by planners
// that consume state uncertainty.
struct PredictedGaussian {
  Vec mean;
  Mat cov;
};

inline PredictedGaussian predict_next(const DiagGaussian& q_t, const Vec& u,
                                      const RankOneTransition& tr, const Vec& H_diag) {
  q_t.validate();
  PredictedGaussian p;
  p.mean = tr.apply(q_t.mean, u);
  const Mat A = tr.A();
  Mat cov = A * q_t.var().asDiagonal() * A.transpose();
  if (H_diag.size() > 0) {
    if (H_diag.size() != q_t.mean.size())
      throw ValidationError("predict_next: H_diag length mismatch");
    cov += Mat(H_diag.asDiagonal());
  }
  // Symmetrize against round-off so downstream factorizations see an exactly
  // symmetric matrix.
  p.cov = 0.5 * (cov + cov.transpose());
  return p;
}

// Dense fallback for the pushed-forward KL when system noise H is nonzero:
// KL( N(A mu0 + B u + o, A Σ₀ Aᵀ + diag(H)) ‖ N(mu1, diag(σ₁²)) ) via explicit
// Cholesky.  With H = 0 this agrees with kl_rank_one (the closed form is
// preferred there; this path exists for the configurable-noise case).
inline double kl_pushforward_dense(const DiagGaussian& q0, const RankOneTransition& tr,
                                   const Vec& u, const Vec& H_diag, const DiagGaussian& q1) {
  q1.validate();
  const PredictedGaussian pred = predict_next(q0, u, tr, H_diag);
  const Eigen::Index n = q1.mean.size();
  if (pred.mean.size() != n) throw ValidationError("kl_pushforward_dense: dimension mismatch");
  Eigen::LLT<Mat> llt(pred.cov);
  if (llt.info() != Eigen::Success)
    throw NumericError("kl_pushforward_dense: pushed covariance not positive definite");
  const Vec var1 = q1.var();
  double logdet0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet0 += 2.0 * std::log(llt.matrixL()(i, i));
  const double logdet1 = 2.0 * q1.log_std.sum();
  const double trace = (pred.cov.diagonal().array() / var1.array()).sum();
  const Vec d = q1.mean - pred.mean;
  const double quad = (d.array().square() / var1.array()).sum();
  return 0.5 * (trace + quad - static_cast<double>(n) + logdet1 - logdet0);
}

// Partial derivatives of kl_rank_one_impl w.r.t. every input (u excluded: it is
// data, not a parameter).  Written out from the closed form term by term; the
// finite-difference suite certifies them.
struct KlRankOneGrads {
  Vec d_mu0, d_log_std0, d_mu1, d_log_std1;
  Vec d_v, d_r, d_o;
  Mat d_B;
};

inline double kl_rank_one_backward(const Vec& mu0, const Vec& log_std0, const RankOneTransition& tr,
                                   const Vec& u, const Vec& mu1, const Vec& log_std1,
                                   double det_floor, KlRankOneGrads& g) {
  const Eigen::Index n = mu0.size();
  const double det = 1.0 + tr.v.dot(tr.r);
  const Eigen::ArrayXd var0 = (2.0 * log_std0.array()).exp();
  const Eigen::ArrayXd var1 = (2.0 * log_std1.array()).exp();
  const Vec mu_hat = mu0 + tr.v * tr.r.dot(mu0) + tr.B * u + tr.o;
  const Eigen::ArrayXd delta = (mu1 - mu_hat).array();
  const Eigen::ArrayXd delta_over_var1 = delta / var1;

  const double r2s0 = (tr.r.array().square() * var0).sum();
  const double v2s1 = (tr.v.array().square() / var1).sum();
  const double trace_diag = (var0 * (1.0 + 2.0 * tr.v.array() * tr.r.array()) / var1).sum();
  const double maha = (delta.square() / var1).sum();
  const bool det_clamped = det <= det_floor;
  const double log_det_ratio =
      2.0 * (log_std1 - log_std0).sum() - 2.0 * std::log(std::max(det, det_floor));
  const double kl =
      0.5 * (trace_diag + r2s0 * v2s1 + maha - static_cast<double>(n) + log_det_ratio);

  const double r_mu0 = tr.r.dot(mu0);
  const Vec dov1 = delta_over_var1.matrix();
  const double v_dot_dov1 = tr.v.dot(dov1);
  // d/d mu1 of the Mahalanobis term; mu0 additionally feels it through Aᵀ.
  g.d_mu1 = dov1;
  g.d_mu0 = -dov1 - tr.r * v_dot_dov1;
  g.d_o = -dov1;
  g.d_B = -dov1 * u.transpose();
  const double inv_det = det_clamped ? 0.0 : 1.0 / det;  // log clamped ⇒ locally constant
  g.d_v = (var0 * tr.r.array() / var1).matrix() + (r2s0 * tr.v.array() / var1).matrix() -
          r_mu0 * dov1 - tr.r * inv_det;
  g.d_r = (var0 * tr.v.array() / var1).matrix() + (v2s1 * var0 * tr.r.array()).matrix() -
          mu0 * v_dot_dov1 - tr.v * inv_det;
  g.d_log_std0 =
      ((var0 * (1.0 + 2.0 * tr.v.array() * tr.r.array()) / var1) +
       var0 * tr.r.array().square() * v2s1 - 1.0)
          .matrix();
  g.d_log_std1 =
      (-(var0 * (1.0 + 2.0 * tr.v.array() * tr.r.array()) / var1) -
       r2s0 * tr.v.array().square() / var1 - delta.square() / var1 + 1.0)
          .matrix();
  return kl;
}

}  // namespace latctl
