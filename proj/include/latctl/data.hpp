// latctl — in-memory dataset of (observation, control, next observation) triples.
// SPDX-License-Identifier: MIT
#pragma once

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl {

// Columns are examples: X and Xn are n_x × N, U is n_u × N.  Controls are
// stored in normalized units (each component in [−1, 1]).
struct TripleSet {
  Mat X, U, Xn;

  Eigen::Index size() const { return X.cols(); }

  void validate(Eigen::Index n_x, Eigen::Index n_u) const {
    if (X.rows() != n_x || Xn.rows() != n_x)
      throw ValidationError("TripleSet: observation dimension mismatch");
    if (U.rows() != n_u) throw ValidationError("TripleSet: control dimension mismatch");
    if (X.cols() != U.cols() || X.cols() != Xn.cols())
      throw ValidationError("TripleSet: example-count mismatch");
    if (X.cols() == 0) throw ValidationError("TripleSet: empty dataset");
    if (!all_finite(X) || !all_finite(U) || !all_finite(Xn))
      throw ValidationError("TripleSet: non-finite entries");
  }
};

}  // namespace latctl
