// latctl — dense multi-layer perceptron with hand-derived reverse-mode gradients.
// SPDX-License-Identifier: MIT
//
// Everything is batched: inputs/activations are matrices with one column per
// example, so the heavy lifting is a handful of GEMMs.  Single-example calls
// are one-column wrappers over the same code path, which keeps the per-example
// and batched results bit-identical.
#pragma once

#include <string>
#include <vector>

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl {

enum class Act { ReLU, Sigmoid, Identity };

inline const char* act_name(Act a) {
  switch (a) {
    case Act::ReLU: return "relu";
    case Act::Sigmoid: return "sigmoid";
    case Act::Identity: return "identity";
  }
  return "?";
}

struct Layer {
  Mat W;   // out × in
  Vec b;   // out
  Act act = Act::Identity;
};

struct MlpParams {
  std::vector<Layer> layers;

  int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }

  void validate() const {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const Layer& l = layers[k];
      if (l.W.rows() != l.b.size())
        throw ValidationError("mlp layer " + std::to_string(k) + ": weight rows != bias size");
      if (k > 0 && layers[k - 1].W.rows() != l.W.cols())
        throw ValidationError("mlp layer " + std::to_string(k) + ": input size does not chain");
    }
  }
};

// Everything mlp_backward needs: the input batch plus pre- and post-activation
// values of every layer.
struct ActivationTrace {
  Mat input;              // in × B
  std::vector<Mat> pre;   // per layer, out × B (before the nonlinearity)
  std::vector<Mat> post;  // per layer, out × B (after the nonlinearity)

  const Mat& output() const { return post.back(); }
};

// Gradients with the same shapes as the parameters; accumulated into, so a
// caller can fold several loss terms into one gradient set.
struct ParamGrads {
  std::vector<Mat> dW;
  std::vector<Vec> db;

  static ParamGrads zeros_like(const MlpParams& p) {
    ParamGrads g;
    g.dW.reserve(p.layers.size());
    g.db.reserve(p.layers.size());
    for (const Layer& l : p.layers) {
      g.dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
      g.db.push_back(Vec::Zero(l.b.size()));
    }
    return g;
  }
};

inline Mat apply_act(Act act, const Mat& a) {
  switch (act) {
    case Act::ReLU: return a.cwiseMax(0.0);
    case Act::Sigmoid: return ((-a.array()).exp() + 1.0).inverse().matrix();
    case Act::Identity: return a;
  }
  return a;
}

// Derivative of the activation expressed through the stored pre/post values,
// multiplied elementwise into g.
inline void chain_act_grad(Act act, const Mat& pre, const Mat& post, Mat& g) {
  switch (act) {
    case Act::ReLU:
      g.array() *= (pre.array() > 0.0).cast<double>();
      break;
    case Act::Sigmoid:
      g.array() *= post.array() * (1.0 - post.array());
      break;
    case Act::Identity:
      break;
  }
}

inline ActivationTrace mlp_forward(const MlpParams& params, const Mat& X) {
  if (params.layers.empty()) throw ValidationError("mlp_forward: empty network");
  if (X.rows() != params.in_dim())
    throw ValidationError("mlp_forward: input has " + std::to_string(X.rows()) +
                          " rows, expected " + std::to_string(params.in_dim()));
  ActivationTrace t;
  t.input = X;
  t.pre.reserve(params.layers.size());
  t.post.reserve(params.layers.size());
  const Mat* h = &t.input;
  for (const Layer& l : params.layers) {
    Mat a = l.W * (*h);
    a.colwise() += l.b;
    t.pre.push_back(std::move(a));
    t.post.push_back(apply_act(l.act, t.pre.back()));
    h = &t.post.back();
  }
  return t;
}

inline ActivationTrace mlp_forward(const MlpParams& params, const Vec& x) {
  return mlp_forward(params, Mat(x));
}

namespace detail {

// Shared backward loop.  `g` enters as the gradient at layer `start`'s
// pre-activation; walks down to the input, accumulating parameter gradients
// (summed over the batch) and returning the gradient w.r.t. the input.
inline Mat backprop_from(const MlpParams& params, const ActivationTrace& t, Mat g,
                         std::size_t start, ParamGrads& grads) {
  for (std::size_t k = start + 1; k-- > 0;) {
    const Layer& l = params.layers[k];
    const Mat& below = (k == 0) ? t.input : t.post[k - 1];
    grads.dW[k].noalias() += g * below.transpose();
    grads.db[k] += g.rowwise().sum();
    if (k == 0) return l.W.transpose() * g;
    g = l.W.transpose() * g;
    chain_act_grad(params.layers[k - 1].act, t.pre[k - 1], t.post[k - 1], g);
  }
  return Mat();
}

}  // namespace detail

// Reverse-mode gradients of (G : output) — i.e. of sum_ij G_ij * output_ij —
// w.r.t. every parameter and the input.  G has the output's shape.
inline Mat mlp_backward(const MlpParams& params, const ActivationTrace& t, const Mat& G,
                        ParamGrads& grads) {
  if (t.pre.size() != params.layers.size() || grads.dW.size() != params.layers.size())
    throw ValidationError("mlp_backward: trace/grads do not match the network");
  if (G.rows() != params.out_dim() || G.cols() != t.input.cols())
    throw ValidationError("mlp_backward: output-gradient shape mismatch");
  const std::size_t last = params.layers.size() - 1;
  Mat g = G;
  chain_act_grad(params.layers[last].act, t.pre[last], t.post[last], g);
  return detail::backprop_from(params, t, std::move(g), last, grads);
}

inline Vec mlp_backward(const MlpParams& params, const ActivationTrace& t, const Vec& grad_output,
                        ParamGrads& grads) {
  return Vec(mlp_backward(params, t, Mat(grad_output), grads));
}

// Backward entry for losses that fuse the last nonlinearity with the loss
// (e.g. sigmoid + cross-entropy): Gpre is the gradient at the last layer's
// pre-activation, which sidesteps the numerically hostile sigmoid'(a) factor.
inline Mat mlp_backward_pre(const MlpParams& params, const ActivationTrace& t, const Mat& Gpre,
                            ParamGrads& grads) {
  if (t.pre.size() != params.layers.size() || grads.dW.size() != params.layers.size())
    throw ValidationError("mlp_backward_pre: trace/grads do not match the network");
  return detail::backprop_from(params, t, Gpre, params.layers.size() - 1, grads);
}

}  // namespace latctl
