// latctl — deterministic orthogonal weight initialization.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/core/mlp.hpp"
#include "latctl/core/rng.hpp"
#include "latctl/errors.hpp"

namespace latctl {

// Orthogonal initialization: QR-orthogonalize a Gaussian random matrix and fix
// the signs with the diagonal of R so the result is unique given the Gaussian
// draw (plain Householder QR leaves per-column signs arbitrary).  The returned
// M satisfies M Mᵀ = gain²·I when rows ≤ cols and Mᵀ M = gain²·I otherwise.
inline Mat orthogonal_init(int rows, int cols, double gain, SeededRng& rng) {
  if (rows < 1 || cols < 1) throw ValidationError("orthogonal_init: non-positive shape");
  if (!(gain > 0.0)) throw ValidationError("orthogonal_init: gain must be positive");
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Mat g(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (int j = 0; j < small; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  q *= gain;
  if (rows >= cols) return q;          // tall (or square): columns orthonormal
  return Mat(q.transpose());           // wide: rows orthonormal
}

// Initialize every layer: orthogonal weights, zero biases.
inline void init_mlp(MlpParams& params, SeededRng& rng, double gain = 1.0) {
  for (Layer& l : params.layers) {
    l.W = orthogonal_init(static_cast<int>(l.W.rows()), static_cast<int>(l.W.cols()), gain, rng);
    l.b.setZero();
  }
}

}  // namespace latctl
