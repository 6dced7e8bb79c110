// latctl — per-variant training objectives with hand-derived gradients.
// SPDX-License-Identifier: MIT
//
// One batched code path serves training, evaluation, and the per-example API
// (a batch of one), so all of them are numerically identical.  Gradients are
// averaged over the batch.  The network-level chain rule is delegated to
// mlp_backward; everything between the network heads and the scalar loss is
// written out by hand below and certified by the finite-difference suite.
#pragma once

#include <cmath>

#include "latctl/core/mlp.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/e2c.hpp"
#include "latctl/model/gaussian.hpp"
#include "latctl/model/transition.hpp"

namespace latctl {

// Guard on the transition determinant 1 + vᵀr: below kDetFloor the pushed
// covariance would lose positive definiteness, so the log is clamped and this
// hinge pushes the parameters back.
constexpr double kDetFloor = 1e-3;
constexpr double kDetHingeWeight = 100.0;

// Additive pieces of the objective; every field is the value actually added to
// `total` (weights already applied to kl_latent and slowness).
struct LossBreakdown {
  double total = 0.0;
  double recon = 0.0;        // current-frame reconstruction NLL
  double recon_next = 0.0;   // predicted next-frame reconstruction NLL
  double kl_prior = 0.0;     // KL of the current encoding from the unit Gaussian
  double kl_latent = 0.0;    // λ-weighted latent-consistency KL
  double slowness = 0.0;     // weighted slowness KL (VAE_SLOW only)
  double hinge = 0.0;        // determinant-guard penalty

  void finalize() { total = recon + recon_next + kl_prior + kl_latent + slowness + hinge; }
};

// Gradients for every trainable tensor, in the same canonical order as
// E2cModel::param_refs().
struct ModelGrads {
  ParamGrads enc, dec, trans;
  Vec d_gv, d_gr, d_go;
  Mat d_gB;

  // Zeroes every tensor in place (no reallocation, so TensorRefs taken earlier
  // stay valid).
  void set_zero() {
    for (ParamGrads* pg : {&enc, &dec, &trans})
      for (std::size_t k = 0; k < pg->dW.size(); ++k) {
        pg->dW[k].setZero();
        pg->db[k].setZero();
      }
    if (d_gv.size() > 0) {
      d_gv.setZero();
      d_gr.setZero();
      d_gB.setZero();
      d_go.setZero();
    }
  }

  static ModelGrads zeros_like(const E2cModel& m) {
    ModelGrads g;
    g.enc = ParamGrads::zeros_like(m.encoder);
    g.dec = ParamGrads::zeros_like(m.decoder);
    g.trans = ParamGrads::zeros_like(m.transition);
    if (m.variant == Variant::E2C_GLOBAL) {
      g.d_gv = Vec::Zero(m.n_z);
      g.d_gr = Vec::Zero(m.n_z);
      g.d_gB = Mat::Zero(m.n_z, m.n_u);
      g.d_go = Vec::Zero(m.n_z);
    }
    return g;
  }

  TensorRefs refs(const E2cModel& m) {
    TensorRefs r;
    for (ParamGrads* pg : {&enc, &dec, &trans})
      for (std::size_t k = 0; k < pg->dW.size(); ++k) {
        r.add(pg->dW[k]);
        r.add(pg->db[k]);
      }
    if (m.variant == Variant::E2C_GLOBAL) {
      r.add(d_gv);
      r.add(d_gr);
      r.add(d_gB);
      r.add(d_go);
    }
    return r;
  }
};

namespace detail {

// Gradient at the decoder head's pre-activation for the Bernoulli NLL summed
// over pixels: (p − x), zeroed where the probability was clamped (there the
// output is locally constant).  `raw` is the unclamped sigmoid output.
inline Mat bernoulli_pre_grad(const Mat& p, const Mat& raw, const Mat& X, double scale) {
  Mat g = (p - X) * scale;
  g.array() *= ((raw.array() > kProbFloor) && (raw.array() < 1.0 - kProbFloor)).cast<double>();
  return g;
}

inline double batch_bernoulli_nll(const Mat& p, const Mat& X) {
  return -(X.array() * p.array().log() + (1.0 - X.array()) * (1.0 - p.array()).log()).sum();
}

}  // namespace detail

// Mean-per-example loss over a batch (columns = examples).  When `grads` is
// non-null, batch-averaged gradients are accumulated into it.
inline LossBreakdown variant_loss_batch(const E2cModel& m, const Mat& X, const Mat& U,
                                        const Mat& Xn, const Mat& Eps, double lambda,
                                        double slowness_weight, ModelGrads* grads) {
  const Eigen::Index B = X.cols();
  if (B == 0) throw ValidationError("variant_loss_batch: empty batch");
  if (U.cols() != B || (Xn.size() > 0 && Xn.cols() != B))
    throw ValidationError("variant_loss_batch: batch size mismatch");
  if (m.variant != Variant::AE && (Eps.rows() != m.n_z || Eps.cols() != B))
    throw ValidationError("variant_loss_batch: eps shape mismatch");
  if (is_e2c_family(m.variant) && m.H_diag.size() > 0 && m.H_diag.maxCoeff() > 0.0)
    throw ValidationError("variant_loss_batch: training requires H_diag = 0 (closed-form KL)");
  const double scale = 1.0 / static_cast<double>(B);
  LossBreakdown out;

  // ---- Current-frame encoding and sample -----------------------------------
  EncodedBatch encT = encode_batch(m, X);
  Mat Z;
  Mat Sigma0;
  if (m.variant == Variant::AE) {
    Z = encT.mu;
  } else {
    Sigma0 = encT.log_std.array().exp().matrix();
    Z = encT.mu + Sigma0.cwiseProduct(Eps);
  }

  // ---- Reconstruction of the current frame ---------------------------------
  DecodedBatch decT = decode_batch(m, Z);
  out.recon = detail::batch_bernoulli_nll(decT.p, X) * scale;

  const bool e2c_like = m.variant == Variant::E2C || m.variant == Variant::E2C_GLOBAL ||
                        m.variant == Variant::E2C_NO_LATENT_KL;
  const bool wants_latent_kl =
      m.variant == Variant::E2C || m.variant == Variant::E2C_GLOBAL || m.variant == Variant::E2C_NONLIN;

  // Per-column transition tensors and the predicted next latent state.
  ActivationTrace trans_trace;       // E2C/E2C_NO_LATENT_KL/E2C_NONLIN forward on the sample
  ActivationTrace trans_trace_mean;  // E2C_NONLIN forward on the mean (consistency-KL path)
  std::vector<RankOneTransition> trs;
  Mat Zhat;  // n_z × B
  if (e2c_like) {
    if (m.variant != Variant::E2C_GLOBAL) trans_trace = mlp_forward(m.transition, Z);
    trs.resize(static_cast<std::size_t>(B));
    Zhat.resize(m.n_z, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      trs[static_cast<std::size_t>(b)] =
          m.variant == Variant::E2C_GLOBAL
              ? m.global_trans
              : split_transition_head(trans_trace.output().col(b), m.n_z, m.n_u);
      Zhat.col(b) = trs[static_cast<std::size_t>(b)].apply(Z.col(b), U.col(b));
    }
  } else if (m.variant == Variant::E2C_NONLIN) {
    Mat ZU(m.n_z + m.n_u, B);
    ZU.topRows(m.n_z) = Z;
    ZU.bottomRows(m.n_u) = U;
    trans_trace = mlp_forward(m.transition, ZU);
    Zhat = trans_trace.output();
  }

  // ---- Predicted next-frame reconstruction ---------------------------------
  DecodedBatch decN;
  if (is_e2c_family(m.variant)) {
    decN = decode_batch(m, Zhat);
    out.recon_next = detail::batch_bernoulli_nll(decN.p, Xn) * scale;
  }

  // ---- Prior KL ------------------------------------------------------------
  if (m.variant != Variant::AE) {
    const auto var0 = (2.0 * encT.log_std.array()).exp();
    out.kl_prior =
        0.5 * (var0 + encT.mu.array().square() - 1.0 - 2.0 * encT.log_std.array()).sum() * scale;
  }

  // ---- Next-frame encoding (consistency/slowness targets) ------------------
  const bool needs_next_encoding = wants_latent_kl || m.variant == Variant::VAE_SLOW;
  EncodedBatch encN;
  if (needs_next_encoding) encN = encode_batch(m, Xn);

  // E2C_NONLIN consistency path evaluates the mean map at the encoder mean.
  Mat F_mean;
  if (m.variant == Variant::E2C_NONLIN) {
    Mat MU(m.n_z + m.n_u, B);
    MU.topRows(m.n_z) = encT.mu;
    MU.bottomRows(m.n_u) = U;
    trans_trace_mean = mlp_forward(m.transition, MU);
    F_mean = trans_trace_mean.output();
  }

  // ---- Gradient seeds ------------------------------------------------------
  Mat Gmu0 = Mat::Zero(m.n_z, B);
  Mat Gls0 = Mat::Zero(m.n_z, B);
  Mat Gmu1, Gls1;
  if (needs_next_encoding) {
    Gmu1 = Mat::Zero(m.n_z, B);
    Gls1 = Mat::Zero(m.n_z, B);
  }
  Mat Gz = Mat::Zero(m.n_z, B);       // gradient w.r.t. the sample z
  Mat Gzhat;                          // gradient w.r.t. the predicted next latent
  Mat Gtau;                           // transition-head gradient (E2C/E2C_NO_LATENT_KL)
  Mat GF_mean;                        // E2C_NONLIN mean-map output gradient
  if (is_e2c_family(m.variant)) Gzhat = Mat::Zero(m.n_z, B);
  if (e2c_like && m.variant != Variant::E2C_GLOBAL)
    Gtau = Mat::Zero(transition_head_size(m.n_z, m.n_u), B);
  if (m.variant == Variant::E2C_NONLIN) GF_mean = Mat::Zero(m.n_z, B);

  // ---- Latent-consistency KL, slowness, hinge ------------------------------
  double kl_latent_raw = 0.0;
  double hinge_total = 0.0;
  if (wants_latent_kl && m.variant != Variant::E2C_NONLIN) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const RankOneTransition& tr = trs[static_cast<std::size_t>(b)];
      KlRankOneGrads kg;
      kl_latent_raw += kl_rank_one_backward(encT.mu.col(b), encT.log_std.col(b), tr, U.col(b),
                                            encN.mu.col(b), encN.log_std.col(b), kDetFloor, kg);
      if (grads) {
        const double w = lambda * scale;
        Gmu0.col(b) += w * kg.d_mu0;
        Gls0.col(b) += w * kg.d_log_std0;
        Gmu1.col(b) += w * kg.d_mu1;
        Gls1.col(b) += w * kg.d_log_std1;
        if (m.variant == Variant::E2C_GLOBAL) {
          grads->d_gv += w * kg.d_v;
          grads->d_gr += w * kg.d_r;
          grads->d_gB += w * kg.d_B;
          grads->d_go += w * kg.d_o;
        } else {
          Gtau.col(b) += w * pack_transition_head(kg.d_v, kg.d_r, kg.d_B, kg.d_o);
        }
      }
    }
  } else if (m.variant == Variant::E2C_NONLIN) {
    // Diagonal consistency KL between N(f(mu0, u), diag sigma0²) and the next
    // encoding; the mean map carries no parameterized Jacobian, so the
    // covariance passes through unchanged.
    const auto var0 = (2.0 * encT.log_std.array()).exp();
    const auto var1 = (2.0 * encN.log_std.array()).exp();
    const auto dmean = (encN.mu - F_mean).array();
    kl_latent_raw = 0.5 * (var0 / var1 + dmean.square() / var1 - 1.0 +
                           2.0 * (encN.log_std - encT.log_std).array())
                              .sum();
    if (grads) {
      const double w = lambda * scale;
      const Mat dov1 = (dmean / var1).matrix();
      GF_mean = -w * dov1;
      Gmu1 += w * dov1;
      Gls0 += w * ((var0 / var1) - 1.0).matrix();
      Gls1 += w * (-(var0 / var1) - dmean.square() / var1 + 1.0).matrix();
    }
  }
  if (e2c_like) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const RankOneTransition& tr = trs[static_cast<std::size_t>(b)];
      const double margin = tr.det_margin();
      if (margin < kDetFloor) {
        const double h = kDetFloor - margin;
        hinge_total += kDetHingeWeight * h * h;
        if (grads) {
          const double dm = -2.0 * kDetHingeWeight * h * scale;
          if (m.variant == Variant::E2C_GLOBAL) {
            grads->d_gv += dm * tr.r;
            grads->d_gr += dm * tr.v;
          } else {
            Gtau.col(b).segment(0, m.n_z) += dm * tr.r;
            Gtau.col(b).segment(m.n_z, m.n_z) += dm * tr.v;
          }
        }
      }
    }
  }
  out.kl_latent = lambda * kl_latent_raw * scale;
  out.hinge = hinge_total * scale;

  double slowness_raw = 0.0;
  if (m.variant == Variant::VAE_SLOW) {
    // KL(q_next ‖ q_t) in diagonal closed form.
    const auto var0 = (2.0 * encT.log_std.array()).exp();
    const auto var1 = (2.0 * encN.log_std.array()).exp();
    const auto dm = (encN.mu - encT.mu).array();
    slowness_raw = 0.5 * (var1 / var0 + dm.square() / var0 - 1.0 +
                          2.0 * (encT.log_std - encN.log_std).array())
                             .sum();
    if (grads) {
      const double w = slowness_weight * scale;
      const Mat dmv0 = (dm / var0).matrix();
      Gmu1 += w * dmv0;
      Gmu0 -= w * dmv0;
      Gls1 += w * ((var1 / var0) - 1.0).matrix();
      Gls0 += w * (-(var1 / var0) - dm.square() / var0 + 1.0).matrix();
    }
  }
  out.slowness = slowness_weight * slowness_raw * scale;
  out.finalize();
  if (!std::isfinite(out.total)) throw NumericError("variant_loss_batch: non-finite loss");
  if (!grads) return out;

  // ---- Backward ------------------------------------------------------------
  // Reconstruction of the current frame.
  {
    const Mat gpre = detail::bernoulli_pre_grad(decT.p, decT.trace.output(), X, scale);
    Gz += mlp_backward_pre(m.decoder, decT.trace, gpre, grads->dec);
  }
  // Predicted next frame.
  if (is_e2c_family(m.variant)) {
    const Mat gpre = detail::bernoulli_pre_grad(decN.p, decN.trace.output(), Xn, scale);
    Gzhat += mlp_backward_pre(m.decoder, decN.trace, gpre, grads->dec);
  }
  // Push the next-latent gradient through the transition structure.
  if (e2c_like) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const RankOneTransition& tr = trs[static_cast<std::size_t>(b)];
      const Vec gzh = Gzhat.col(b);
      const double v_g = tr.v.dot(gzh);
      const double r_z = tr.r.dot(Z.col(b));
      // zhat = z + v (rᵀz) + B u + o  ⇒  Aᵀ g lands on z, the rest on (v,r,B,o).
      Gz.col(b) += gzh + tr.r * v_g;
      if (m.variant == Variant::E2C_GLOBAL) {
        grads->d_gv += r_z * gzh;
        grads->d_gr += v_g * Z.col(b);
        grads->d_gB += gzh * U.col(b).transpose();
        grads->d_go += gzh;
      } else {
        Gtau.col(b) += pack_transition_head(Vec(r_z * gzh), Vec(v_g * Z.col(b)),
                                            Mat(gzh * U.col(b).transpose()), gzh);
      }
    }
    if (m.variant != Variant::E2C_GLOBAL)
      Gz += mlp_backward(m.transition, trans_trace, Gtau, grads->trans);
  } else if (m.variant == Variant::E2C_NONLIN) {
    // Sample path: gradient enters at the network output.
    const Mat gin = mlp_backward(m.transition, trans_trace, Gzhat, grads->trans);
    Gz += gin.topRows(m.n_z);
    // Mean path (consistency KL): separate forward, gradient lands on mu0.
    const Mat gin_mean = mlp_backward(m.transition, trans_trace_mean, GF_mean, grads->trans);
    Gmu0 += gin_mean.topRows(m.n_z);
  }
  // Reparameterization: z = mu0 + sigma0 ⊙ eps.
  if (m.variant == Variant::AE) {
    Gmu0 += Gz;
  } else {
    Gmu0 += Gz;
    Gls0 += Gz.cwiseProduct(Sigma0).cwiseProduct(Eps);
    // Prior KL.
    Gmu0 += scale * encT.mu;
    Gls0 += scale * ((2.0 * encT.log_std.array()).exp() - 1.0).matrix();
  }
  // Encoder backward, current frame.
  {
    Mat ghead(m.encoder_head(), B);
    ghead.topRows(m.n_z) = Gmu0;
    if (m.variant != Variant::AE) ghead.bottomRows(m.n_z) = Gls0;
    mlp_backward(m.encoder, encT.trace, ghead, grads->enc);
  }
  // Encoder backward, next frame (consistency/slowness targets only).
  if (needs_next_encoding) {
    Mat ghead(2 * m.n_z, B);
    ghead.topRows(m.n_z) = Gmu1;
    ghead.bottomRows(m.n_z) = Gls1;
    mlp_backward(m.encoder, encN.trace, ghead, grads->enc);
  }
  return out;
}

// Single-example interface: a batch of one with fixed noise.
inline LossBreakdown e2c_loss(const E2cModel& m, const Vec& x, const Vec& u, const Vec& x_next,
                              const Vec& eps, double lambda, ModelGrads* grads,
                              double slowness_weight = 1.0) {
  if (!is_e2c_family(m.variant) && m.variant != Variant::AE && m.variant != Variant::VAE &&
      m.variant != Variant::VAE_SLOW)
    throw ValidationError("e2c_loss: unknown variant");
  return variant_loss_batch(m, Mat(x), Mat(u), Mat(x_next), Mat(eps), lambda, slowness_weight,
                            grads);
}

}  // namespace latctl
