// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by tests. Everything here
// is deliberately brute force (dense loops, exhaustive enumeration) and
// shares no code with the library paths it checks.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "neuropool/adjacency.hpp"
#include "neuropool/rng.hpp"
#include "neuropool/types.hpp"

namespace oracles {

using neuropool::AdjacencyMatrix;
using neuropool::Index;
using neuropool::Matrix;
using neuropool::RngStream;
using neuropool::Scalar;
using neuropool::Vector;

// --- dense graph oracles -----------------------------------------------------

inline Vector dense_row_sums(const Matrix& a) {
  Vector out = Vector::Zero(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) out[i] += a(i, j);
  }
  return out;
}

// D~^{-1/2} (A+I) D~^{-1/2} via explicit dense products.
inline Matrix dense_normalized(const Matrix& a) {
  const Index n = a.rows();
  Matrix a_tilde = a + Matrix::Identity(n, n);
  Matrix d_inv_sqrt = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    Scalar deg = 0.0;
    for (Index j = 0; j < n; ++j) deg += a_tilde(i, j);
    d_inv_sqrt(i, i) = 1.0 / std::sqrt(deg);
  }
  return d_inv_sqrt * a_tilde * d_inv_sqrt;
}

// D^{-1} A H with zero rows mapped to zero.
inline Matrix dense_neighbor_mean(const Matrix& a, const Matrix& h) {
  Matrix out = Matrix::Zero(h.rows(), h.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    Scalar deg = 0.0;
    for (Index j = 0; j < a.cols(); ++j) deg += a(i, j);
    if (deg == 0.0) continue;
    for (Index d = 0; d < h.cols(); ++d) {
      Scalar acc = 0.0;
      for (Index j = 0; j < a.cols(); ++j) acc += a(i, j) * h(j, d);
      out(i, d) = acc / deg;
    }
  }
  return out;
}

// Row-wise L1 of (I - D^{-1}A) H.
inline Vector dense_information_score(const Matrix& a, const Matrix& h) {
  const Matrix mean = dense_neighbor_mean(a, h);
  Vector s = Vector::Zero(h.rows());
  for (Index i = 0; i < h.rows(); ++i) {
    for (Index d = 0; d < h.cols(); ++d) s[i] += std::abs(h(i, d) - mean(i, d));
  }
  return s;
}

// --- sparsemax oracle ----------------------------------------------------------
//
// Exhaustive support enumeration for the simplex projection QP: for every
// non-empty support S, tau_S = (sum_S z - 1)/|S| and x = [z - tau_S]_+ is a
// valid solution iff the supported coordinates stay nonnegative and the
// excluded ones would be clipped. The projection is unique, so the first
// feasible support gives the answer.
inline std::optional<Vector> sparsemax_qp(const Vector& z) {
  const int k = static_cast<int>(z.size());
  if (k < 1 || k > 20) return std::nullopt;
  constexpr Scalar kTol = 1e-12;
  for (unsigned mask = 1; mask < (1u << k); ++mask) {
    Scalar sum = 0.0;
    int size = 0;
    for (int j = 0; j < k; ++j) {
      if (mask & (1u << j)) {
        sum += z[j];
        ++size;
      }
    }
    const Scalar tau = (sum - 1.0) / static_cast<Scalar>(size);
    bool feasible = true;
    for (int j = 0; j < k && feasible; ++j) {
      if (mask & (1u << j)) {
        feasible = z[j] - tau >= -kTol;
      } else {
        feasible = z[j] - tau <= kTol;
      }
    }
    if (!feasible) continue;
    Vector x = Vector::Zero(k);
    for (int j = 0; j < k; ++j) {
      if (mask & (1u << j)) x[j] = std::max(z[j] - tau, 0.0);
    }
    return x;
  }
  return std::nullopt;
}

// --- AUC oracle ------------------------------------------------------------------

// Exhaustive pair counting: correctly ordered positive/negative pairs count
// 1, ties count 1/2.
inline Scalar auc_pair_counting(const Vector& scores,
                                const std::vector<int>& labels) {
  Scalar wins = 0.0;
  long pairs = 0;
  for (Index p = 0; p < scores.size(); ++p) {
    if (labels[static_cast<std::size_t>(p)] != 1) continue;
    for (Index q = 0; q < scores.size(); ++q) {
      if (labels[static_cast<std::size_t>(q)] != 0) continue;
      ++pairs;
      if (scores[p] > scores[q]) {
        wins += 1.0;
      } else if (scores[p] == scores[q]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<Scalar>(pairs);
}

// --- random inputs -----------------------------------------------------------------

inline AdjacencyMatrix random_undirected(Index n, Scalar edge_prob,
                                         RngStream& rng,
                                         bool self_loops = false) {
  AdjacencyMatrix adj(n, true);
  for (Index i = 0; i < n; ++i) {
    if (self_loops && rng.uniform01() < edge_prob) {
      adj.set(i, i, 0.25 + rng.uniform01());
    }
    for (Index j = i + 1; j < n; ++j) {
      if (rng.uniform01() < edge_prob) {
        adj.set(i, j, 0.25 + rng.uniform01());
      }
    }
  }
  return adj;
}

inline Matrix random_matrix(Index rows, Index cols, RngStream& rng,
                            Scalar scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

// --- finite differences --------------------------------------------------------------

// Relative error with a floor: genuinely relative for healthy gradients,
// absolute (1e-7-ish at tol 1e-4) once both values are tiny.
inline Scalar fd_rel_error(Scalar analytic, Scalar numeric) {
  const Scalar denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-3);
  return std::abs(analytic - numeric) / denom;
}

// Central difference of a scalar function of one parameter entry.
template <typename LossFn>
Scalar central_difference(LossFn&& loss, Scalar& slot, Scalar h = 1e-5) {
  const Scalar saved = slot;
  slot = saved + h;
  const Scalar up = loss();
  slot = saved - h;
  const Scalar down = loss();
  slot = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace oracles
