// latctl — dense numeric carriers and small helpers shared by every module.
// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace latctl {

// Row-major storage so that raw buffers serialize in row-major order, which is
// the layout the file formats and the transition-head segment layout promise.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

inline Vec clamp(const Vec& v, const Vec& lo, const Vec& hi) {
  Vec out = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = clamp(v[i], lo[i], hi[i]);
  return out;
}

}  // namespace latctl
