// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <utility>
#include <vector>

#include "neuropool/types.hpp"

namespace neuropool {

/// Weighted graph adjacency in coordinate form.
///
/// Entries are keyed by (row, col) in a sorted map, so iteration — and with
/// it every floating-point summation in this module — has a fixed,
/// reproducible order. Weights are finite and nonnegative; an undirected
/// matrix stores both (i,j) and (j,i) with equal weight.
class AdjacencyMatrix {
 public:
  using EntryMap = std::map<std::pair<Index, Index>, Scalar>;

  AdjacencyMatrix() : n_(0), undirected_(true) {}
  explicit AdjacencyMatrix(Index n, bool undirected = true)
      : n_(n), undirected_(undirected) {}

  Index node_count() const { return n_; }
  bool undirected() const { return undirected_; }

  /// Inserts or overwrites an entry; mirrors (j,i) when undirected.
  void set(Index i, Index j, Scalar w);

  /// Stored weight, or 0 when the entry is absent.
  Scalar at(Index i, Index j) const;

  bool contains(Index i, Index j) const {
    return entries_.count({i, j}) != 0;
  }

  const EntryMap& entries() const { return entries_; }

  /// Number of edges: unordered pairs plus self-loops when undirected,
  /// stored entries when directed.
  Index edge_count() const;

  Matrix to_dense() const;

  /// Subgraph induced by `nodes` (ascending, unique); entry (a,b) of the
  /// result is the weight between nodes[a] and nodes[b].
  AdjacencyMatrix induced(const std::vector<Index>& nodes) const;

  bool operator==(const AdjacencyMatrix& other) const {
    return n_ == other.n_ && undirected_ == other.undirected_ &&
           entries_ == other.entries_;
  }

 private:
  Index n_;
  bool undirected_;
  EntryMap entries_;
};

/// Weighted degrees: diagonal[i] = sum_j A(i,j).
Vector degree_matrix(const AdjacencyMatrix& adj);

/// Symmetric normalization with self-loops added:
/// D~^{-1/2} (A + I) D~^{-1/2}, where D~ is the degree of A + I.
/// Every entry lies in [0, 1]; adding I keeps all degrees positive.
AdjacencyMatrix normalized_adjacency(const AdjacencyMatrix& adj);

/// Row-normalized neighborhood aggregation D^{-1} A H.
/// Rows with zero degree produce the zero vector.
Matrix neighbor_mean(const AdjacencyMatrix& adj,
                     const Eigen::Ref<const Matrix>& feats);

}  // namespace neuropool
