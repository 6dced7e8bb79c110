// latctl — checkpoint files: model weights, optimizer state, training progress.
// SPDX-License-Identifier: MIT
#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "latctl/core/adam.hpp"
#include "latctl/errors.hpp"
#include "latctl/io/blob.hpp"
#include "latctl/model/e2c.hpp"
#include "latctl/model/train.hpp"

namespace latctl::io {

// Everything needed to resume training bit-exactly or to run inference:
// the model, the Adam moments, how many epochs have completed, the training
// configuration, an optional separately-fitted latent-dynamics network
// (baselines without a transition model need one for control), and free-form
// metadata recorded by the CLI (env, seed, config overrides, build id).
struct Checkpoint {
  E2cModel model;
  AdamState adam;
  TrainConfig train_cfg;
  int epoch = 0;  // epochs completed
  bool has_fitted = false;
  MlpParams fitted;
  nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline TensorRefs mlp_refs(MlpParams& p) {
  TensorRefs refs;
  for (Layer& l : p.layers) {
    refs.add(l.W);
    refs.add(l.b);
  }
  return refs;
}

// Concatenates the referenced tensors into one column vector (the file stores
// each parameter set as a single flat block; structure is rebuilt from dims).
inline Mat flatten(const TensorRefs& refs) {
  Mat flat(refs.total_size(), 1);
  Eigen::Index at = 0;
  for (const auto& b : refs.blocks) {
    std::memcpy(flat.data() + at, b.first, static_cast<std::size_t>(b.second) * sizeof(double));
    at += b.second;
  }
  return flat;
}

inline void unflatten(const Mat& flat, TensorRefs& refs, const std::string& what) {
  if (flat.cols() != 1 || flat.rows() != refs.total_size())
    throw IoError("checkpoint block '" + what + "' has " + std::to_string(flat.size()) +
                  " values, expected " + std::to_string(refs.total_size()));
  Eigen::Index at = 0;
  for (auto& b : refs.blocks) {
    std::memcpy(b.first, flat.data() + at, static_cast<std::size_t>(b.second) * sizeof(double));
    at += b.second;
  }
}

inline Mat flatten_moments(const std::vector<Vec>& moments) {
  Eigen::Index total = 0;
  for (const Vec& v : moments) total += v.size();
  Mat flat(total, 1);
  Eigen::Index at = 0;
  for (const Vec& v : moments) {
    std::memcpy(flat.data() + at, v.data(), static_cast<std::size_t>(v.size()) * sizeof(double));
    at += v.size();
  }
  return flat;
}

inline void unflatten_moments(const Mat& flat, std::vector<Vec>& moments, const std::string& what) {
  Eigen::Index total = 0;
  for (const Vec& v : moments) total += v.size();
  if (flat.cols() != 1 || flat.rows() != total)
    throw IoError("checkpoint block '" + what + "' has " + std::to_string(flat.size()) +
                  " values, expected " + std::to_string(total));
  Eigen::Index at = 0;
  for (Vec& v : moments) {
    std::memcpy(v.data(), flat.data() + at, static_cast<std::size_t>(v.size()) * sizeof(double));
    at += v.size();
  }
}

inline nlohmann::json arch_json(const ArchSizes& a) {
  return {{"encoder_hidden", a.encoder_hidden},
          {"decoder_hidden", a.decoder_hidden},
          {"transition_hidden", a.transition_hidden}};
}

inline std::vector<int> checked_hidden(std::vector<int> hidden, const std::string& what) {
  for (int h : hidden)
    if (h < 1) throw IoError("checkpoint field '" + what + "' has a non-positive layer width");
  return hidden;
}

inline ArchSizes arch_from_json(const nlohmann::json& j) {
  ArchSizes a;
  a.encoder_hidden = checked_hidden(header_get<std::vector<int>>(j, "encoder_hidden"), "encoder_hidden");
  a.decoder_hidden = checked_hidden(header_get<std::vector<int>>(j, "decoder_hidden"), "decoder_hidden");
  a.transition_hidden =
      checked_hidden(header_get<std::vector<int>>(j, "transition_hidden"), "transition_hidden");
  return a;
}

// The architecture is not stored on E2cModel; recover the hidden widths from
// the built networks so save round-trips without carrying ArchSizes around.
inline std::vector<int> hidden_of(const MlpParams& p) {
  std::vector<int> hidden;
  for (std::size_t k = 0; k + 1 < p.layers.size(); ++k)
    hidden.push_back(static_cast<int>(p.layers[k].W.rows()));
  return hidden;
}

}  // namespace detail

// Payload blocks, in order: model parameters (canonical tensor order), H_diag,
// Adam first moments, Adam second moments, then the fitted network if present.
inline void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  Blob blob;
  blob.header["format"] = "checkpoint";
  blob.header["n_x"] = ckpt.model.n_x;
  blob.header["n_z"] = ckpt.model.n_z;
  blob.header["n_u"] = ckpt.model.n_u;
  blob.header["variant"] = variant_name(ckpt.model.variant);
  ArchSizes arch;
  arch.encoder_hidden = detail::hidden_of(ckpt.model.encoder);
  arch.decoder_hidden = detail::hidden_of(ckpt.model.decoder);
  arch.transition_hidden = detail::hidden_of(ckpt.model.transition);
  if (!has_transition_net(ckpt.model.variant))
    arch.transition_hidden = {};  // no transition net was built
  blob.header["arch"] = detail::arch_json(arch);
  blob.header["epoch"] = ckpt.epoch;
  blob.header["adam"] = {{"step", ckpt.adam.step},
                         {"alpha", ckpt.adam.alpha},
                         {"beta1", ckpt.adam.beta1},
                         {"beta2", ckpt.adam.beta2},
                         {"epsilon", ckpt.adam.epsilon}};
  blob.header["train"] = {{"lambda", ckpt.train_cfg.lambda},
                          {"slowness_weight", ckpt.train_cfg.slowness_weight},
                          {"learning_rate", ckpt.train_cfg.learning_rate},
                          {"beta1", ckpt.train_cfg.beta1},
                          {"beta2", ckpt.train_cfg.beta2},
                          {"epsilon", ckpt.train_cfg.epsilon},
                          {"batch_size", ckpt.train_cfg.batch_size},
                          {"epochs", ckpt.train_cfg.epochs}};
  blob.header["has_fitted"] = ckpt.has_fitted;
  if (ckpt.has_fitted) blob.header["fitted_hidden"] = detail::hidden_of(ckpt.fitted);
  blob.header["meta"] = ckpt.meta;

  blob.blocks.push_back(detail::flatten(ckpt.model.param_refs()));
  blob.blocks.push_back(Mat(ckpt.model.H_diag));
  blob.blocks.push_back(detail::flatten_moments(ckpt.adam.m));
  blob.blocks.push_back(detail::flatten_moments(ckpt.adam.v));
  if (ckpt.has_fitted) blob.blocks.push_back(detail::flatten(detail::mlp_refs(ckpt.fitted)));
  save_blob(path, kCheckpointMagic, blob);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  Blob blob = load_blob(path, kCheckpointMagic);
  if (header_get<std::string>(blob.header, "format") != "checkpoint")
    throw IoError("not a checkpoint file: " + path);

  Checkpoint ckpt;
  Variant variant;
  ArchSizes arch;
  try {
    variant = parse_variant(header_get<std::string>(blob.header, "variant"));
    arch = detail::arch_from_json(header_get<nlohmann::json>(blob.header, "arch"));
    ckpt.model = build_model(header_get<int>(blob.header, "n_x"),
                             header_get<int>(blob.header, "n_z"),
                             header_get<int>(blob.header, "n_u"), variant, arch);
  } catch (const ValidationError& e) {
    throw IoError("checkpoint header invalid (" + std::string(e.what()) + "): " + path);
  }
  ckpt.epoch = header_get<int>(blob.header, "epoch");
  ckpt.has_fitted = header_get<bool>(blob.header, "has_fitted");
  const std::size_t expect_blocks = ckpt.has_fitted ? 5 : 4;
  if (blob.blocks.size() != expect_blocks)
    throw IoError("checkpoint expects " + std::to_string(expect_blocks) +
                  " payload blocks, found " + std::to_string(blob.blocks.size()) + ": " + path);

  const nlohmann::json adam_j = header_get<nlohmann::json>(blob.header, "adam");
  const nlohmann::json train_j = header_get<nlohmann::json>(blob.header, "train");
  ckpt.train_cfg.lambda = header_get<double>(train_j, "lambda");
  ckpt.train_cfg.slowness_weight = header_get<double>(train_j, "slowness_weight");
  ckpt.train_cfg.learning_rate = header_get<double>(train_j, "learning_rate");
  ckpt.train_cfg.beta1 = header_get<double>(train_j, "beta1");
  ckpt.train_cfg.beta2 = header_get<double>(train_j, "beta2");
  ckpt.train_cfg.epsilon = header_get<double>(train_j, "epsilon");
  ckpt.train_cfg.batch_size = header_get<int>(train_j, "batch_size");
  ckpt.train_cfg.epochs = header_get<int>(train_j, "epochs");
  ckpt.meta = header_get<nlohmann::json>(blob.header, "meta");

  TensorRefs params = ckpt.model.param_refs();
  detail::unflatten(blob.blocks[0], params, "model");
  if (blob.blocks[1].cols() != 1 || blob.blocks[1].rows() != ckpt.model.n_z)
    throw IoError("checkpoint block 'H_diag' has the wrong size: " + path);
  ckpt.model.H_diag = Vec(blob.blocks[1].col(0));

  ckpt.adam = AdamState::like(params, header_get<double>(adam_j, "alpha"),
                              header_get<double>(adam_j, "beta1"),
                              header_get<double>(adam_j, "beta2"),
                              header_get<double>(adam_j, "epsilon"));
  ckpt.adam.step = header_get<long>(adam_j, "step");
  if (blob.blocks[2].size() == 0 && blob.blocks[3].size() == 0) {
    // Saved before the optimizer was initialized; training will create fresh
    // moments on first use.
    ckpt.adam.m.clear();
    ckpt.adam.v.clear();
  } else {
    detail::unflatten_moments(blob.blocks[2], ckpt.adam.m, "adam_m");
    detail::unflatten_moments(blob.blocks[3], ckpt.adam.v, "adam_v");
  }

  if (ckpt.has_fitted) {
    const auto hidden = detail::checked_hidden(
        header_get<std::vector<int>>(blob.header, "fitted_hidden"), "fitted_hidden");
    ckpt.fitted = latctl::detail::make_mlp(ckpt.model.n_z + ckpt.model.n_u, hidden,
                                           ckpt.model.n_z, Act::Identity);
    TensorRefs fitted_refs = detail::mlp_refs(ckpt.fitted);
    detail::unflatten(blob.blocks[4], fitted_refs, "fitted");
  }
  return ckpt;
}

}  // namespace latctl::io
