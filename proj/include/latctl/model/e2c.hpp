// latctl — the latent dynamics model: Gaussian encoder, Bernoulli decoder, and
// a per-state rank-one transition network, plus the baseline variants.
// SPDX-License-Identifier: MIT
#pragma once

#include <string>
#include <vector>

#include "latctl/core/adam.hpp"
#include "latctl/core/init.hpp"
#include "latctl/core/mlp.hpp"
#include "latctl/core/rng.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/gaussian.hpp"
#include "latctl/model/transition.hpp"

namespace latctl {

enum class Variant {
  AE,                 // deterministic autoencoder, reconstruction only
  VAE,                // variational autoencoder (ELBO)
  VAE_SLOW,           // VAE plus temporal-slowness KL between consecutive encodings
  E2C,                // locally linear latent dynamics, full consistency objective
  E2C_GLOBAL,         // single global (v, r, B, o) instead of a transition network
  E2C_NONLIN,         // transition network predicts the next mean directly
  E2C_NO_LATENT_KL,   // E2C without the latent-consistency KL term
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::AE: return "ae";
    case Variant::VAE: return "vae";
    case Variant::VAE_SLOW: return "vae_slow";
    case Variant::E2C: return "e2c";
    case Variant::E2C_GLOBAL: return "e2c_global";
    case Variant::E2C_NONLIN: return "e2c_nonlin";
    case Variant::E2C_NO_LATENT_KL: return "e2c_no_latent_kl";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::AE, Variant::VAE, Variant::VAE_SLOW, Variant::E2C,
                    Variant::E2C_GLOBAL, Variant::E2C_NONLIN, Variant::E2C_NO_LATENT_KL})
    if (s == variant_name(v)) return v;
  throw ValidationError("unknown model variant '" + s + "'");
}

inline bool is_e2c_family(Variant v) {
  return v == Variant::E2C || v == Variant::E2C_GLOBAL || v == Variant::E2C_NONLIN ||
         v == Variant::E2C_NO_LATENT_KL;
}

inline bool has_transition_net(Variant v) {
  return v == Variant::E2C || v == Variant::E2C_NONLIN || v == Variant::E2C_NO_LATENT_KL;
}

// Hidden-layer widths; the heads are derived from (n_z, n_u, variant).
struct ArchSizes {
  std::vector<int> encoder_hidden;
  std::vector<int> decoder_hidden;
  std::vector<int> transition_hidden;
};

// Reference architectures for the two benchmark tasks.
inline ArchSizes planar_arch() { return {{150, 150, 150}, {200, 200}, {100, 100}}; }
inline ArchSizes pendulum_arch() { return {{800, 800}, {800, 800}, {100, 100}}; }

struct E2cModel {
  int n_x = 0;
  int n_z = 0;
  int n_u = 0;
  Variant variant = Variant::E2C;

  MlpParams encoder;     // head: [mu; log_std] (mu only for AE)
  MlpParams decoder;     // head: n_x, Sigmoid (probabilities, clamped in decode)
  MlpParams transition;  // E2C/E2C_NO_LATENT_KL: rank-one head; E2C_NONLIN: next mean
  RankOneTransition global_trans;  // E2C_GLOBAL only
  Vec H_diag;            // system-noise variances added to predicted covariance

  int encoder_head() const { return variant == Variant::AE ? n_z : 2 * n_z; }

  // Canonical parameter order shared by the optimizer, serializer and tests:
  // encoder layers, decoder layers, transition layers, then the global
  // transition tensors when present.
  TensorRefs param_refs() {
    TensorRefs refs;
    for (MlpParams* net : {&encoder, &decoder, &transition})
      for (Layer& l : net->layers) {
        refs.add(l.W);
        refs.add(l.b);
      }
    if (variant == Variant::E2C_GLOBAL) {
      refs.add(global_trans.v);
      refs.add(global_trans.r);
      refs.add(global_trans.B);
      refs.add(global_trans.o);
    }
    return refs;
  }
};

namespace detail {
inline MlpParams make_mlp(int in, const std::vector<int>& hidden, int out, Act head_act) {
  MlpParams p;
  int prev = in;
  for (int h : hidden) {
    p.layers.push_back({Mat::Zero(h, prev), Vec::Zero(h), Act::ReLU});
    prev = h;
  }
  p.layers.push_back({Mat::Zero(out, prev), Vec::Zero(out), head_act});
  return p;
}
}  // namespace detail

inline E2cModel build_model(int n_x, int n_z, int n_u, Variant variant, const ArchSizes& arch) {
  if (n_x < 1 || n_z < 1 || n_u < 1) throw ValidationError("build_model: non-positive dimensions");
  E2cModel m;
  m.n_x = n_x;
  m.n_z = n_z;
  m.n_u = n_u;
  m.variant = variant;
  m.encoder = detail::make_mlp(n_x, arch.encoder_hidden, m.encoder_head(), Act::Identity);
  m.decoder = detail::make_mlp(n_z, arch.decoder_hidden, n_x, Act::Sigmoid);
  if (variant == Variant::E2C || variant == Variant::E2C_NO_LATENT_KL) {
    m.transition =
        detail::make_mlp(n_z, arch.transition_hidden, transition_head_size(n_z, n_u), Act::Identity);
  } else if (variant == Variant::E2C_NONLIN) {
    // The next-mean network needs the control as an input.
    m.transition = detail::make_mlp(n_z + n_u, arch.transition_hidden, n_z, Act::Identity);
  } else if (variant == Variant::E2C_GLOBAL) {
    m.global_trans.v = Vec::Zero(n_z);
    m.global_trans.r = Vec::Zero(n_z);
    m.global_trans.B = Mat::Zero(n_z, n_u);
    m.global_trans.o = Vec::Zero(n_z);
  }
  m.H_diag = Vec::Zero(n_z);
  return m;
}

inline void init_model(E2cModel& m, SeededRng& rng, double gain = 1.0) {
  init_mlp(m.encoder, rng, gain);
  init_mlp(m.decoder, rng, gain);
  if (!m.transition.layers.empty()) init_mlp(m.transition, rng, gain);
  // Global transition starts at the identity map (v = r = o = 0, B = 0).
}

// ---- Batched building blocks (one column per example) ----------------------

struct EncodedBatch {
  ActivationTrace trace;
  Mat mu;       // n_z × B
  Mat log_std;  // n_z × B (empty for AE)
};

inline EncodedBatch encode_batch(const E2cModel& m, const Mat& X) {
  if (X.rows() != m.n_x) throw ValidationError("encode: observation length mismatch");
  EncodedBatch e;
  e.trace = mlp_forward(m.encoder, X);
  const Mat& head = e.trace.output();
  e.mu = head.topRows(m.n_z);
  if (m.variant != Variant::AE) e.log_std = head.bottomRows(m.n_z);
  return e;
}

// Bernoulli probabilities are clamped away from {0, 1} so log-likelihoods stay
// finite on exactly binary targets.
constexpr double kProbFloor = 1e-7;

struct DecodedBatch {
  ActivationTrace trace;
  Mat p;  // clamped probabilities, n_x × B
};

inline DecodedBatch decode_batch(const E2cModel& m, const Mat& Z) {
  if (Z.rows() != m.n_z) throw ValidationError("decode: latent length mismatch");
  DecodedBatch d;
  d.trace = mlp_forward(m.decoder, Z);
  d.p = d.trace.output().array().max(kProbFloor).min(1.0 - kProbFloor);
  return d;
}

// ---- Single-example interface ----------------------------------------------

inline DiagGaussian encode(const E2cModel& m, const Vec& x) {
  EncodedBatch e = encode_batch(m, Mat(x));
  DiagGaussian q;
  q.mean = e.mu.col(0);
  q.log_std = m.variant == Variant::AE ? Vec(Vec::Zero(m.n_z)) : Vec(e.log_std.col(0));
  return q;
}

inline Vec decode(const E2cModel& m, const Vec& z) {
  return decode_batch(m, Mat(z)).p.col(0);
}

// Sum of Bernoulli negative log-likelihoods over pixels (per-example total;
// batch metrics average these totals over examples).
inline double bernoulli_nll(const Vec& p, const Vec& x) {
  if (p.size() != x.size()) throw ValidationError("bernoulli_nll: length mismatch");
  return -(x.array() * p.array().log() + (1.0 - x.array()) * (1.0 - p.array()).log()).sum();
}

// Local transition parameters at a latent point.  Defined for the variants that
// carry rank-one structure; E2C_GLOBAL returns its z-independent tensors.
inline RankOneTransition transition_params(const E2cModel& m, const Vec& z) {
  switch (m.variant) {
    case Variant::E2C:
    case Variant::E2C_NO_LATENT_KL: {
      const ActivationTrace t = mlp_forward(m.transition, Mat(z));
      return split_transition_head(t.output().col(0), m.n_z, m.n_u);
    }
    case Variant::E2C_GLOBAL:
      return m.global_trans;
    default:
      throw ValidationError(std::string("transition_params: unsupported for variant ") +
                            variant_name(m.variant));
  }
}

}  // namespace latctl
