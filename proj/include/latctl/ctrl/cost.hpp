// latctl — quadratic latent-space trajectory costs with an optional
// hinge-squared obstacle-proximity penalty.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

#include <vector>

namespace latctl {

// Stage cost  c(z, u) = (z - z_goal)' R_z (z - z_goal) + u' R_u u
//                       + R_o * sum_k max(0, d0 - |z - z_obs_k|)^2 .
// The terminal cost uses the same form without the control term.
struct LatentCost {
  Vec z_goal;
  Mat R_z;  // symmetric PSD
  Mat R_u;  // symmetric PD
  std::vector<Vec> obstacle_encodings;
  double R_o = 0.0;
  double d0 = 1.0;

  void validate() const {
    if (R_z.rows() != R_z.cols() || R_z.rows() != z_goal.size())
      throw ValidationError("LatentCost: R_z shape does not match z_goal");
    if (R_u.rows() != R_u.cols())
      throw ValidationError("LatentCost: R_u must be square");
    for (const Vec& z : obstacle_encodings)
      if (z.size() != z_goal.size())
        throw ValidationError("LatentCost: obstacle encoding dimension mismatch");
  }
};

inline double state_cost(const Vec& z, const LatentCost& cost) {
  const Vec d = z - cost.z_goal;
  double c = d.dot(cost.R_z * d);
  for (const Vec& zo : cost.obstacle_encodings) {
    const double gap = cost.d0 - (z - zo).norm();
    if (gap > 0.0) c += cost.R_o * gap * gap;
  }
  return c;
}

inline double quad_cost(const Vec& z, const Vec& u, const LatentCost& cost) {
  return state_cost(z, cost) + u.dot(cost.R_u * u);
}

// Local quadratic model of the state cost at z: value, gradient, and a
// positive-semidefinite curvature. The obstacle hinge keeps only its
// Gauss-Newton curvature 2*R_o*g*g' (g the unit vector away from the
// obstacle); the neglected curvature term can be indefinite and would let
// the backward pass produce non-descent directions.
struct StateCostModel {
  double value = 0.0;
  Vec grad;
  Mat hess;
};

inline StateCostModel state_cost_model(const Vec& z, const LatentCost& cost) {
  StateCostModel out;
  const Vec d = z - cost.z_goal;
  const Vec Rd = cost.R_z * d;
  out.value = d.dot(Rd);
  out.grad = 2.0 * Rd;
  out.hess = 2.0 * cost.R_z;
  for (const Vec& zo : cost.obstacle_encodings) {
    const Vec dz = z - zo;
    const double dist = dz.norm();
    const double gap = cost.d0 - dist;
    if (gap <= 0.0) continue;
    out.value += cost.R_o * gap * gap;
    if (dist > 1e-12) {
      const Vec g = dz / dist;
      out.grad -= 2.0 * cost.R_o * gap * g;
      out.hess += 2.0 * cost.R_o * (g * g.transpose());
    } else {
      // Sitting exactly on the obstacle: no defined direction; keep the value
      // and an isotropic curvature so the optimizer is still pushed to leave.
      out.hess += 2.0 * cost.R_o * Mat::Identity(z.size(), z.size());
    }
  }
  return out;
}

}  // namespace latctl
