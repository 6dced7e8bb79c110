// latctl — rank-one locally linear transition parameters.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl {

// Local affine dynamics z' = A z + B u + o with A = I + v rᵀ.  Keeping only
// (v, r) instead of a full A makes the predicted-covariance KL closed-form and
// cuts the head size from n_z² to 2·n_z.
struct RankOneTransition {
  Vec v;
  Vec r;
  Mat B;  // n_z × n_u
  Vec o;

  Mat A() const {
    const Eigen::Index n = v.size();
    return Mat(Mat::Identity(n, n) + v * r.transpose());
  }

  // Apply the affine map without forming A.
  Vec apply(const Vec& z, const Vec& u) const { return z + v * r.dot(z) + B * u + o; }

  double det_margin() const { return 1.0 + v.dot(r); }
};

// Head layout: [v | r | B row-major | o], sizes n_z, n_z, n_z·n_u, n_z.
inline int transition_head_size(int n_z, int n_u) { return 2 * n_z + n_z * n_u + n_z; }

inline RankOneTransition split_transition_head(const Vec& head, int n_z, int n_u) {
  if (head.size() != transition_head_size(n_z, n_u))
    throw ValidationError("split_transition_head: head size " + std::to_string(head.size()) +
                          " != expected " + std::to_string(transition_head_size(n_z, n_u)));
  RankOneTransition t;
  t.v = head.segment(0, n_z);
  t.r = head.segment(n_z, n_z);
  t.B = Mat(n_z, n_u);
  for (int i = 0; i < n_z; ++i)
    for (int j = 0; j < n_u; ++j) t.B(i, j) = head[2 * n_z + i * n_u + j];
  t.o = head.segment(2 * n_z + n_z * n_u, n_z);
  return t;
}

// Inverse of split_transition_head for gradient bookkeeping.
inline Vec pack_transition_head(const Vec& v, const Vec& r, const Mat& B, const Vec& o) {
  const int n_z = static_cast<int>(v.size());
  const int n_u = static_cast<int>(B.cols());
  Vec head(transition_head_size(n_z, n_u));
  head.segment(0, n_z) = v;
  head.segment(n_z, n_z) = r;
  for (int i = 0; i < n_z; ++i)
    for (int j = 0; j < n_u; ++j) head[2 * n_z + i * n_u + j] = B(i, j);
  head.segment(2 * n_z + n_z * n_u, n_z) = o;
  return head;
}

}  // namespace latctl
