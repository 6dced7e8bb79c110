// latctl — dataset generation into train/validation/test splits and file I/O.
// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <string>

#include "latctl/data.hpp"
#include "latctl/env/env.hpp"
#include "latctl/errors.hpp"
#include "latctl/io/blob.hpp"

namespace latctl::io {

struct DatasetSplits {
  EnvKind env = EnvKind::Planar;
  std::uint64_t seed = 0;
  TripleSet train, val, test;

  Eigen::Index total() const { return train.size() + val.size() + test.size(); }
};

// Draws `total` triples split 80/10/10 (validation and test get ⌊total/10⌋
// each, training the remainder).  Each split samples from its own child RNG
// stream, so enlarging one split never perturbs the others.
inline DatasetSplits generate_dataset(EnvKind env, int total, std::uint64_t seed) {
  if (total < 1) throw ValidationError("generate_dataset: sample count must be >= 1");
  const int n_val = total / 10;
  const int n_test = total / 10;
  const int n_train = total - n_val - n_test;
  if (n_val < 1 || n_test < 1)
    throw ValidationError("generate_dataset: need at least 10 samples so every split is nonempty");

  const EnvSpec spec = env == EnvKind::Planar ? planar_env_spec() : pendulum_env_spec();
  if (env != EnvKind::Planar && env != EnvKind::Pendulum)
    throw ValidationError("generate_dataset: only planar and pendulum environments have datasets");

  DatasetSplits out;
  out.env = env;
  out.seed = seed;
  SeededRng root(seed);
  SeededRng rng_train = root.split(0);
  SeededRng rng_val = root.split(1);
  SeededRng rng_test = root.split(2);
  out.train = sample_dataset(spec, n_train, rng_train);
  out.val = sample_dataset(spec, n_val, rng_val);
  out.test = sample_dataset(spec, n_test, rng_test);
  return out;
}

// File layout: one container with nine blocks, three (X, U, Xn) groups in
// train/val/test order.  Shapes live in the blocks; semantics in the header.
// `meta` is carried verbatim (emitting tools record config/build provenance).
inline void save_dataset(const std::string& path, const DatasetSplits& d,
                         const nlohmann::json& meta = nlohmann::json::object()) {
  Blob blob;
  blob.header["meta"] = meta;
  blob.header["format"] = "dataset";
  blob.header["env"] = env_kind_name(d.env);
  blob.header["seed"] = d.seed;
  blob.header["n_train"] = d.train.size();
  blob.header["n_val"] = d.val.size();
  blob.header["n_test"] = d.test.size();
  for (const TripleSet* s : {&d.train, &d.val, &d.test}) {
    blob.blocks.push_back(s->X);
    blob.blocks.push_back(s->U);
    blob.blocks.push_back(s->Xn);
  }
  save_blob(path, kDatasetMagic, blob);
}

inline DatasetSplits load_dataset(const std::string& path) {
  Blob blob = load_blob(path, kDatasetMagic);
  if (header_get<std::string>(blob.header, "format") != "dataset")
    throw IoError("not a dataset file: " + path);
  if (blob.blocks.size() != 9)
    throw IoError("dataset expects 9 payload blocks, found " +
                  std::to_string(blob.blocks.size()) + ": " + path);

  DatasetSplits d;
  try {
    d.env = parse_env_kind(header_get<std::string>(blob.header, "env"));
  } catch (const ValidationError& e) {
    throw IoError(std::string(e.what()) + ": " + path);
  }
  if (d.env != EnvKind::Planar && d.env != EnvKind::Pendulum)
    throw IoError("dataset env must be planar or pendulum: " + path);
  d.seed = header_get<std::uint64_t>(blob.header, "seed");
  TripleSet* splits[3] = {&d.train, &d.val, &d.test};
  const char* names[3] = {"n_train", "n_val", "n_test"};
  const EnvSpec spec = d.env == EnvKind::Planar ? planar_env_spec() : pendulum_env_spec();
  for (int k = 0; k < 3; ++k) {
    splits[k]->X = std::move(blob.blocks[3 * k + 0]);
    splits[k]->U = std::move(blob.blocks[3 * k + 1]);
    splits[k]->Xn = std::move(blob.blocks[3 * k + 2]);
    if (splits[k]->size() != header_get<Eigen::Index>(blob.header, names[k]))
      throw IoError("dataset header/block count mismatch for " + std::string(names[k]) + ": " +
                    path);
    try {
      splits[k]->validate(spec.n_x, spec.n_u);
    } catch (const ValidationError& e) {
      throw IoError("dataset " + std::string(names[k]) + " split invalid (" + e.what() +
                    "): " + path);
    }
  }
  return d;
}

}  // namespace latctl::io
