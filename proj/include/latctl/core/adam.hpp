// latctl — Adam optimizer over flat views of parameter blocks.
// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl {

// A parameter set is an ordered list of raw (pointer, length) blocks.  Models
// expose their tensors this way so the optimizer, the serializer, and the
// finite-difference tests all walk parameters in one canonical order.
struct TensorRefs {
  std::vector<std::pair<double*, Eigen::Index>> blocks;

  void add(Mat& m) { blocks.emplace_back(m.data(), m.size()); }
  void add(Vec& v) { blocks.emplace_back(v.data(), v.size()); }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks) n += b.second;
    return n;
  }
};

struct AdamState {
  long step = 0;
  std::vector<Vec> m;  // first moments, one entry per block
  std::vector<Vec> v;  // second moments (always ≥ 0)
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.1;
  double epsilon = 1e-8;

  static AdamState like(const TensorRefs& params, double alpha, double beta1, double beta2,
                        double epsilon = 1e-8) {
    AdamState s;
    s.alpha = alpha;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    s.m.reserve(params.blocks.size());
    s.v.reserve(params.blocks.size());
    for (const auto& b : params.blocks) {
      s.m.push_back(Vec::Zero(b.second));
      s.v.push_back(Vec::Zero(b.second));
    }
    return s;
  }
};

// One bias-corrected Adam update.  `grads` must mirror `params` block-by-block.
inline void adam_step(AdamState& state, TensorRefs& params, const TensorRefs& grads) {
  if (params.blocks.size() != grads.blocks.size() || params.blocks.size() != state.m.size())
    throw ValidationError("adam_step: parameter/gradient/state block counts differ");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.blocks.size(); ++k) {
    const Eigen::Index n = params.blocks[k].second;
    if (grads.blocks[k].second != n)
      throw ValidationError("adam_step: gradient block shape mismatch");
    Eigen::Map<Eigen::ArrayXd> p(params.blocks[k].first, n);
    Eigen::Map<const Eigen::ArrayXd> g(grads.blocks[k].first, n);
    auto m = state.m[k].array();
    auto v = state.v[k].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    p -= state.alpha * (m / bc1) / ((v / bc2).sqrt() + state.epsilon);
  }
}

}  // namespace latctl
