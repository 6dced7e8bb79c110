// latctl — open-loop "dream" rollouts: encode once, then iterate the learned
// latent dynamics and decode every step without re-encoding.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/mlp.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/e2c.hpp"
#include "latctl/model/loss.hpp"

namespace latctl {

struct DreamResult {
  Mat Z;       // n_z × (K+1): latent means, Z.col(0) = encoding of x0
  Mat frames;  // n_x × (K+1): decoded Bernoulli means for every latent state
};

// One latent step under the model's own dynamics.  For the baselines (AE/VAE/
// VAE_SLOW) a separately fitted dynamics network must be supplied.
inline Vec dream_step(const E2cModel& m, const Vec& z, const Vec& u,
                      const MlpParams* fitted_dynamics) {
  if (fitted_dynamics != nullptr) {
    Vec in(m.n_z + m.n_u);
    in.head(m.n_z) = z;
    in.tail(m.n_u) = u;
    return mlp_forward(*fitted_dynamics, in).output().col(0);
  }
  switch (m.variant) {
    case Variant::E2C:
    case Variant::E2C_NO_LATENT_KL:
    case Variant::E2C_GLOBAL: {
      const RankOneTransition tr = transition_params(m, z);
      if (tr.det_margin() <= kDetFloor)
        throw NumericError("dream_step: near-singular transition (1 + v'r <= guard)");
      return tr.apply(z, u);
    }
    case Variant::E2C_NONLIN: {
      Vec in(m.n_z + m.n_u);
      in.head(m.n_z) = z;
      in.tail(m.n_u) = u;
      return mlp_forward(m.transition, in).output().col(0);
    }
    default:
      throw ValidationError(
          "dream_step: variant has no latent dynamics; supply a fitted dynamics network");
  }
}

// U has one control per column (n_u × K); K = 0 yields just the reconstruction
// of x0.  No re-encoding happens after step 0.
inline DreamResult dream_rollout(const E2cModel& m, const Vec& x0, const Mat& U,
                                 const MlpParams* fitted_dynamics = nullptr) {
  if (x0.size() != m.n_x) throw ValidationError("dream_rollout: observation size mismatch");
  if (U.size() > 0 && U.rows() != m.n_u)
    throw ValidationError("dream_rollout: control dimension mismatch");
  const Eigen::Index K = U.cols();
  DreamResult out;
  out.Z.resize(m.n_z, K + 1);
  out.Z.col(0) = encode(m, x0).mean;
  for (Eigen::Index k = 0; k < K; ++k)
    out.Z.col(k + 1) = dream_step(m, out.Z.col(k), U.col(k), fitted_dynamics);
  out.frames = decode_batch(m, out.Z).p;
  return out;
}

}  // namespace latctl
