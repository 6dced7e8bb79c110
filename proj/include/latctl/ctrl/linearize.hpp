// latctl — local affine (plus optional Gaussian noise) models of latent
// dynamics, obtained analytically from the transition network or by central
// finite differences around a nominal point.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"
#include "latctl/model/e2c.hpp"

#include <functional>
#include <utility>

namespace latctl {

// z_next ≈ A z + B u + o, valid near the expansion point; exact at it.
// C is the one-step process noise covariance (zero matrix when absent).
struct LocalDynamics {
  Mat A;
  Mat B;
  Vec o;
  Mat C;
};

// A latent-space dynamical system: an exact step map plus a local affine
// model of it. For models whose transition is state-dependent affine the
// two agree at the expansion point by construction.
struct LatentDynamics {
  std::function<Vec(const Vec&, const Vec&)> step;
  std::function<LocalDynamics(const Vec&, const Vec&)> local;
};

// Central-difference linearization of an arbitrary step map. The offset is
// chosen so the affine model reproduces f exactly at (z_bar, u_bar).
inline LocalDynamics linearize_finite_diff(
    const std::function<Vec(const Vec&, const Vec&)>& f, const Vec& z_bar,
    const Vec& u_bar, double h = 1e-4) {
  const Vec f0 = f(z_bar, u_bar);
  const int n_z = static_cast<int>(z_bar.size());
  const int n_u = static_cast<int>(u_bar.size());
  LocalDynamics ld;
  ld.A = Mat::Zero(f0.size(), n_z);
  ld.B = Mat::Zero(f0.size(), n_u);
  Vec zp = z_bar, zm = z_bar, up = u_bar, um = u_bar;
  for (int j = 0; j < n_z; ++j) {
    zp(j) += h;
    zm(j) -= h;
    ld.A.col(j) = (f(zp, u_bar) - f(zm, u_bar)) / (2.0 * h);
    zp(j) = z_bar(j);
    zm(j) = z_bar(j);
  }
  for (int j = 0; j < n_u; ++j) {
    up(j) += h;
    um(j) -= h;
    ld.B.col(j) = (f(z_bar, up) - f(z_bar, um)) / (2.0 * h);
    up(j) = u_bar(j);
    um(j) = u_bar(j);
  }
  ld.o = f0 - ld.A * z_bar - ld.B * u_bar;
  ld.C = Mat::Zero(f0.size(), f0.size());
  return ld;
}

// Constant-coefficient affine dynamics (used by tests and by synthetic
// latent environments).
inline LatentDynamics affine_dynamics(Mat A, Mat B, Vec o, Mat C = Mat()) {
  if (C.size() == 0) C = Mat::Zero(A.rows(), A.rows());
  auto step = [A, B, o](const Vec& z, const Vec& u) -> Vec {
    return A * z + B * u + o;
  };
  auto local = [A, B, o, C](const Vec&, const Vec&) -> LocalDynamics {
    return LocalDynamics{A, B, o, C};
  };
  return LatentDynamics{std::move(step), std::move(local)};
}

// Latent dynamics of a trained model.
//  - Transition-tensor variants: the step applies the state-dependent affine
//    map, and the local model reads A, B, o straight off the network heads
//    (exact at the expansion point).
//  - The nonlinear-transition variant and the baseline variants (whose
//    transition is a separately fitted network passed as `fitted`) step
//    through their network and are linearized by finite differences.
inline LatentDynamics model_dynamics(const E2cModel& m,
                                     const MlpParams* fitted = nullptr) {
  const Mat C = Mat(m.H_diag.asDiagonal());
  if (m.variant == Variant::E2C || m.variant == Variant::E2C_GLOBAL ||
      m.variant == Variant::E2C_NO_LATENT_KL) {
    auto step = [&m](const Vec& z, const Vec& u) -> Vec {
      return transition_params(m, z).apply(z, u);
    };
    auto local = [&m, C](const Vec& z, const Vec& u) -> LocalDynamics {
      (void)u;  // the affine model is control-independent
      const RankOneTransition tr = transition_params(m, z);
      return LocalDynamics{tr.A(), tr.B, tr.o, C};
    };
    return LatentDynamics{std::move(step), std::move(local)};
  }
  const MlpParams* net = nullptr;
  if (m.variant == Variant::E2C_NONLIN) {
    net = &m.transition;
  } else {
    if (fitted == nullptr)
      throw ValidationError(
          "model_dynamics: this variant has no transition network; supply a "
          "fitted latent-dynamics network");
    net = fitted;
  }
  auto step = [net](const Vec& z, const Vec& u) -> Vec {
    Vec zu(z.size() + u.size());
    zu << z, u;
    return Vec(mlp_forward(*net, zu).output().col(0));
  };
  auto local = [step, C](const Vec& z, const Vec& u) -> LocalDynamics {
    LocalDynamics ld = linearize_finite_diff(step, z, u);
    ld.C = C;
    return ld;
  };
  return LatentDynamics{std::move(step), std::move(local)};
}

}  // namespace latctl
