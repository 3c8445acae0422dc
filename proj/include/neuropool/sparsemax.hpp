// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <vector>

#include "neuropool/types.hpp"

namespace neuropool {

/// Euclidean projection of `z` onto the probability simplex.
///
/// Closed form: out_j = max(z_j - tau, 0) with the threshold
/// tau = (sum of the k largest entries - 1) / k, where k is the largest
/// support size keeping all supported entries positive. The output is
/// nonnegative, sums to 1, and is exactly sparse: entries below tau are
/// truncated to zero rather than merely small.
template <typename Derived>
Vector sparsemax(const Eigen::MatrixBase<Derived>& z) {
  const Index k_max = z.size();
  if (k_max < 1) {
    throw DataError("sparsemax: input must be non-empty");
  }
  Vector sorted = z;
  if (!sorted.allFinite()) {
    throw NumericError("sparsemax: non-finite input");
  }
  std::sort(sorted.data(), sorted.data() + k_max,
            [](Scalar a, Scalar b) { return a > b; });

  Scalar cum = 0.0;
  Scalar cum_at_support = sorted[0];
  Index support = 1;
  for (Index k = 0; k < k_max; ++k) {
    cum += sorted[k];
    if (1.0 + static_cast<Scalar>(k + 1) * sorted[k] > cum) {
      support = k + 1;
      cum_at_support = cum;
    }
  }
  const Scalar tau = (cum_at_support - 1.0) / static_cast<Scalar>(support);

  Vector out(k_max);
  for (Index j = 0; j < k_max; ++j) {
    out[j] = std::max(z[j] - tau, 0.0);
  }
  return out;
}

}  // namespace neuropool
