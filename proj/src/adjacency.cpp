// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/adjacency.hpp"

#include <cmath>
#include <string>

namespace neuropool {

void AdjacencyMatrix::set(Index i, Index j, Scalar w) {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) {
    throw DataError("adjacency: index (" + std::to_string(i) + "," +
                    std::to_string(j) + ") out of range for n=" +
                    std::to_string(n_));
  }
  if (!std::isfinite(w) || w < 0.0) {
    throw DataError("adjacency: weight must be finite and >= 0");
  }
  entries_[{i, j}] = w;
  if (undirected_ && i != j) {
    entries_[{j, i}] = w;
  }
}

Scalar AdjacencyMatrix::at(Index i, Index j) const {
  auto it = entries_.find({i, j});
  return it == entries_.end() ? 0.0 : it->second;
}

Index AdjacencyMatrix::edge_count() const {
  if (!undirected_) return static_cast<Index>(entries_.size());
  Index diag = 0;
  for (const auto& [key, w] : entries_) {
    if (key.first == key.second) ++diag;
  }
  return (static_cast<Index>(entries_.size()) - diag) / 2 + diag;
}

Matrix AdjacencyMatrix::to_dense() const {
  Matrix dense = Matrix::Zero(n_, n_);
  for (const auto& [key, w] : entries_) {
    dense(key.first, key.second) = w;
  }
  return dense;
}

AdjacencyMatrix AdjacencyMatrix::induced(const std::vector<Index>& nodes) const {
  std::map<Index, Index> local;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    local[nodes[a]] = static_cast<Index>(a);
  }
  AdjacencyMatrix sub(static_cast<Index>(nodes.size()), undirected_);
  for (const auto& [key, w] : entries_) {
    auto it = local.find(key.first);
    auto jt = local.find(key.second);
    if (it != local.end() && jt != local.end()) {
      sub.entries_[{it->second, jt->second}] = w;
    }
  }
  return sub;
}

Vector degree_matrix(const AdjacencyMatrix& adj) {
  Vector deg = Vector::Zero(adj.node_count());
  for (const auto& [key, w] : adj.entries()) {
    deg[key.first] += w;
  }
  return deg;
}

AdjacencyMatrix normalized_adjacency(const AdjacencyMatrix& adj) {
  if (!adj.undirected()) {
    throw DataError("normalized_adjacency: adjacency must be undirected");
  }
  const Index n = adj.node_count();

  // Degrees of A + I; strictly positive because of the added self-loop.
  Vector deg = degree_matrix(adj);
  Vector inv_sqrt(n);
  for (Index i = 0; i < n; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(deg[i] + 1.0);
  }

  AdjacencyMatrix out(n, true);
  for (const auto& [key, w] : adj.entries()) {
    const auto [i, j] = key;
    const Scalar a_tilde = (i == j) ? w + 1.0 : w;
    out.set(i, j, a_tilde * inv_sqrt[i] * inv_sqrt[j]);
  }
  for (Index i = 0; i < n; ++i) {
    if (!adj.contains(i, i)) {
      out.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
  }
  return out;
}

Matrix neighbor_mean(const AdjacencyMatrix& adj,
                     const Eigen::Ref<const Matrix>& feats) {
  if (adj.node_count() != feats.rows()) {
    throw DataError("neighbor_mean: adjacency and feature row counts differ");
  }
  Vector deg = degree_matrix(adj);
  Matrix out = Matrix::Zero(feats.rows(), feats.cols());
  for (const auto& [key, w] : adj.entries()) {
    out.row(key.first) += w * feats.row(key.second);
  }
  for (Index i = 0; i < out.rows(); ++i) {
    if (deg[i] > 0.0) {
      out.row(i) /= deg[i];
    } else {
      out.row(i).setZero();
    }
  }
  return out;
}

}  // namespace neuropool
