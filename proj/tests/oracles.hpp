// latctl tests — independent reference implementations ("oracles").
// SPDX-License-Identifier: MIT
//
// Everything here is deliberately written the slow, obvious way — dense linear
// algebra, explicit inverses, scalar loops, textbook recursions — so that the
// library's specialized closed forms are checked against code that shares no
// structure with them.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "latctl/core/dense.hpp"

namespace oracle {

using latctl::Mat;
using latctl::Vec;

// KL( N(mu0, S0) ‖ N(mu1, S1) ) for full covariance matrices, via explicit
// inverse and log-determinant.
inline double dense_gaussian_kl(const Vec& mu0, const Mat& S0, const Vec& mu1, const Mat& S1) {
  const Eigen::Index n = mu0.size();
  const Mat S1inv = S1.inverse();
  const Vec d = mu1 - mu0;
  const double trace = (S1inv * S0).trace();
  const double quad = d.dot(S1inv * d);
  const double logdet = std::log(S1.determinant()) - std::log(S0.determinant());
  return 0.5 * (trace + quad - static_cast<double>(n) + logdet);
}

// Central finite difference of a scalar function of one scalar, evaluated by
// mutating *x in place (used to walk raw parameter storage).
inline double central_difference(double* x, const std::function<double()>& f, double h = 1e-5) {
  const double saved = *x;
  *x = saved + h;
  const double fp = f();
  *x = saved - h;
  const double fm = f();
  *x = saved;
  return (fp - fm) / (2.0 * h);
}

// Pass rule shared by all gradient checks: relative error below tol, with an
// absolute floor for gradients that are themselves tiny.
inline bool fd_match(double analytic, double numeric, double rel_tol = 1e-4,
                     double abs_tol = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return diff < rel_tol * scale || diff < abs_tol;
}

// Finite-horizon discrete LQR via dynamic programming (backward Riccati
// recursion) for time-varying affine dynamics x' = A x + B u + c and quadratic
// stage costs 0.5 xᵀQ x + qᵀx + 0.5 uᵀR u (final stage: Qf, qf).  Returns the
// optimal cost from x0 and the optimal controls by forward rollout.
struct LqrStage {
  Mat A, B;
  Vec c;
  Mat Q;
  Vec q;
  Mat R;
};

struct LqrSolution {
  double cost = 0.0;
  std::vector<Vec> x, u;
};

inline LqrSolution riccati_solve(const std::vector<LqrStage>& stages, const Mat& Qf, const Vec& qf,
                                 const Vec& x0) {
  const std::size_t T = stages.size();  // number of controls
  std::vector<Mat> K(T);
  std::vector<Vec> k(T);
  // Value function 0.5 xᵀ V x + vᵀ x (+ constant, not tracked: the optimal
  // cost is measured by rolling the exact feedback law forward and summing
  // stage costs directly).
  Mat V = Qf;
  Vec v = qf;
  for (std::size_t tt = T; tt-- > 0;) {
    const LqrStage& s = stages[tt];
    const Mat Qxx = s.Q + s.A.transpose() * V * s.A;
    const Mat Quu = s.R + s.B.transpose() * V * s.B;
    const Mat Qux = s.B.transpose() * V * s.A;
    const Vec qx = s.q + s.A.transpose() * (V * s.c + v);
    const Vec qu = s.B.transpose() * (V * s.c + v);
    const Mat Quu_inv = Quu.inverse();
    K[tt] = -Quu_inv * Qux;
    k[tt] = -Quu_inv * qu;
    V = Qxx + Qux.transpose() * K[tt];
    V = 0.5 * (V + V.transpose());
    v = qx + Qux.transpose() * k[tt] + K[tt].transpose() * (qu + Quu * k[tt]);
  }
  LqrSolution sol;
  Vec x = x0;
  sol.x.push_back(x);
  for (std::size_t tt = 0; tt < T; ++tt) {
    const LqrStage& s = stages[tt];
    const Vec u = K[tt] * x + k[tt];
    sol.cost += 0.5 * x.dot(s.Q * x) + s.q.dot(x) + 0.5 * u.dot(s.R * u);
    x = s.A * x + s.B * u + s.c;
    sol.u.push_back(u);
    sol.x.push_back(x);
  }
  sol.cost += 0.5 * x.dot(Qf * x) + qf.dot(x);
  return sol;
}

}  // namespace oracle
