// latctl — minibatch Adam training loop and the baselines' latent-dynamics fit.
// SPDX-License-Identifier: MIT
//
// Determinism contract: the whole epoch — shuffle order, reparameterization
// noise, update order — is a pure function of (seed, epoch index), drawn from a
// per-epoch child RNG.  Resuming from a checkpoint at an epoch boundary is
// therefore bit-identical to an uninterrupted run.
#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "latctl/core/adam.hpp"
#include "latctl/core/rng.hpp"
#include "latctl/data.hpp"
#include "latctl/model/e2c.hpp"
#include "latctl/model/loss.hpp"

namespace latctl {

struct TrainConfig {
  double lambda = 0.25;          // latent-consistency KL weight
  double slowness_weight = 1.0;  // VAE_SLOW extra-term weight
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.1;
  double epsilon = 1e-8;
  int batch_size = 128;
  int epochs = 200;

  void validate() const {
    if (learning_rate <= 0.0 || batch_size <= 0 || epochs < 0)
      throw ValidationError("TrainConfig: learning_rate > 0, batch_size > 0, epochs >= 0 required");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ValidationError("TrainConfig: betas must lie in [0, 1)");
    if (lambda < 0.0 || slowness_weight < 0.0)
      throw ValidationError("TrainConfig: weights must be nonnegative");
  }
};

struct EpochMetrics {
  int epoch = 0;                 // zero-based
  LossBreakdown mean;            // batch-size-weighted mean over the epoch
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs epochs [start_epoch, cfg.epochs) of shuffled minibatch Adam, mutating
// model and opt in place.  Returns one metrics row per epoch run.
inline std::vector<EpochMetrics> train_model(E2cModel& model, AdamState& opt,
                                             const TripleSet& data, const TrainConfig& cfg,
                                             std::uint64_t seed, int start_epoch = 0,
                                             const EpochCallback& on_epoch = {}) {
  cfg.validate();
  data.validate(model.n_x, model.n_u);
  opt.alpha = cfg.learning_rate;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.epsilon = cfg.epsilon;

  TensorRefs params = model.param_refs();
  ModelGrads grads = ModelGrads::zeros_like(model);
  TensorRefs grad_refs = grads.refs(model);
  if (opt.m.empty()) opt = AdamState::like(params, cfg.learning_rate, cfg.beta1, cfg.beta2);
  const Eigen::Index N = data.size();
  const SeededRng base(seed);

  std::vector<EpochMetrics> history;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    SeededRng er = base.split(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    er.shuffle(order);

    LossBreakdown sum;
    for (Eigen::Index begin = 0; begin < N; begin += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, N - begin);
      Mat X(model.n_x, bs), U(model.n_u, bs), Xn(model.n_x, bs);
      for (Eigen::Index j = 0; j < bs; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(begin + j)];
        X.col(j) = data.X.col(src);
        U.col(j) = data.U.col(src);
        Xn.col(j) = data.Xn.col(src);
      }
      Mat Eps;
      if (model.variant != Variant::AE) {
        Eps.resize(model.n_z, bs);
        for (Eigen::Index j = 0; j < bs; ++j)
          for (Eigen::Index i = 0; i < model.n_z; ++i) Eps(i, j) = er.normal();
      }
      grads.set_zero();
      const LossBreakdown lb =
          variant_loss_batch(model, X, U, Xn, Eps, cfg.lambda, cfg.slowness_weight, &grads);
      adam_step(opt, params, grad_refs);
      const double w = static_cast<double>(bs);
      sum.recon += w * lb.recon;
      sum.recon_next += w * lb.recon_next;
      sum.kl_prior += w * lb.kl_prior;
      sum.kl_latent += w * lb.kl_latent;
      sum.slowness += w * lb.slowness;
      sum.hinge += w * lb.hinge;
    }
    EpochMetrics em;
    em.epoch = epoch;
    const double inv = 1.0 / static_cast<double>(N);
    em.mean.recon = sum.recon * inv;
    em.mean.recon_next = sum.recon_next * inv;
    em.mean.kl_prior = sum.kl_prior * inv;
    em.mean.kl_latent = sum.kl_latent * inv;
    em.mean.slowness = sum.slowness * inv;
    em.mean.hinge = sum.hinge * inv;
    em.mean.finalize();
    history.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Baseline latent dynamics: the AE/VAE/VAE_SLOW models have no transition of
// their own, so a regression MLP [z; u] → z_next is fitted on the frozen
// encoder's means after autoencoder training.
// ---------------------------------------------------------------------------

struct LatentTripleSet {
  Mat Z, U, Zn;  // columns = examples
};

inline LatentTripleSet encode_latent_dataset(const E2cModel& m, const TripleSet& data) {
  data.validate(m.n_x, m.n_u);
  LatentTripleSet out;
  out.Z = encode_batch(m, data.X).mu;
  out.Zn = encode_batch(m, data.Xn).mu;
  out.U = data.U;
  return out;
}

struct DynamicsFitConfig {
  std::vector<int> hidden = {100, 100};
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int batch_size = 128;
  int epochs = 200;
};

// Fits z_next ≈ f([z; u]) by minibatch Adam on mean squared error (mean over
// examples, sum over coordinates).  Deterministic given seed, same per-epoch
// RNG scheme as train_model.
inline MlpParams fit_latent_dynamics(const LatentTripleSet& data, Eigen::Index n_z,
                                     Eigen::Index n_u, const DynamicsFitConfig& cfg,
                                     std::uint64_t seed) {
  if (data.Z.rows() != n_z || data.Zn.rows() != n_z || data.U.rows() != n_u)
    throw ValidationError("fit_latent_dynamics: dimension mismatch");
  const Eigen::Index N = data.Z.cols();
  if (N == 0 || data.U.cols() != N || data.Zn.cols() != N)
    throw ValidationError("fit_latent_dynamics: example-count mismatch");

  SeededRng init_rng = SeededRng(seed).split(0xD1CE);
  MlpParams net = detail::make_mlp(static_cast<int>(n_z + n_u), cfg.hidden,
                                   static_cast<int>(n_z), Act::Identity);
  init_mlp(net, init_rng);

  TensorRefs params;
  ParamGrads grads = ParamGrads::zeros_like(net);
  TensorRefs grad_refs;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    params.add(net.layers[k].W);
    params.add(net.layers[k].b);
    grad_refs.add(grads.dW[k]);
    grad_refs.add(grads.db[k]);
  }
  AdamState opt = AdamState::like(params, cfg.learning_rate, cfg.beta1, cfg.beta2);

  const SeededRng base(seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng er = base.split(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    er.shuffle(order);
    for (Eigen::Index begin = 0; begin < N; begin += cfg.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, N - begin);
      Mat In(n_z + n_u, bs), Target(n_z, bs);
      for (Eigen::Index j = 0; j < bs; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(begin + j)];
        In.col(j).head(n_z) = data.Z.col(src);
        In.col(j).tail(n_u) = data.U.col(src);
        Target.col(j) = data.Zn.col(src);
      }
      ActivationTrace trace = mlp_forward(net, In);
      const Mat gout = (trace.output() - Target) * (2.0 / static_cast<double>(bs));
      for (std::size_t k = 0; k < grads.dW.size(); ++k) {
        grads.dW[k].setZero();
        grads.db[k].setZero();
      }
      mlp_backward(net, trace, gout, grads);
      adam_step(opt, params, grad_refs);
    }
  }
  return net;
}

inline double latent_dynamics_mse(const MlpParams& net, const LatentTripleSet& data) {
  Mat In(data.Z.rows() + data.U.rows(), data.Z.cols());
  In.topRows(data.Z.rows()) = data.Z;
  In.bottomRows(data.U.rows()) = data.U;
  ActivationTrace tr = mlp_forward(net, In);
  return (tr.output() - data.Zn).squaredNorm() / static_cast<double>(data.Z.cols());
}

}  // namespace latctl
