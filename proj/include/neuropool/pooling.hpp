// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "neuropool/adjacency.hpp"
#include "neuropool/types.hpp"

namespace neuropool {

struct PoolingConfig {
  Scalar ratio = 0.05;  // fraction of nodes kept per layer, in (0, 1]
  int layers = 1;       // pooling layers; each applies the same ratio
  // Candidate edges are re-predicted among nodes within this many hops
  // of each survivor in the pre-pooling graph.
  static constexpr int kCandidateHops = 2;

  void validate() const;
};

struct PoolingLayerTrace {
  Vector scores;                          // over the layer's input nodes
  std::vector<Index> selected_original;   // survivors, original numbering
};

struct PoolingResult {
  std::vector<Index> selected;  // ascending, original numbering
  AdjacencyMatrix pooled_adj;   // directed; rows are sparsemax distributions
  Matrix pooled_feats;          // rows of the input features at `selected`
  std::vector<PoolingLayerTrace> layer_trace;
};

/// Flattened node-feature vector with only the selected nodes' blocks
/// present. Block i (length feat_dim) holds node i's feature row when node i
/// survived pooling; every other position is implicitly zero.
struct SparseFeatureVector {
  std::uint64_t total_len = 0;
  std::vector<std::pair<std::uint64_t, Scalar>> entries;  // sorted by position

  Vector to_dense() const;
};

/// Per-node information score: row-wise L1 distance between each node's
/// features and the mean of its neighbors' features, i.e. the row L1 norms
/// of (I - D^{-1} A) H. A node whose features equal its neighborhood mean
/// scores 0 and is the first candidate for removal.
Vector information_score(const AdjacencyMatrix& adj,
                         const Eigen::Ref<const Matrix>& feats);

/// Indices of the ceil(ratio * n) largest scores, ties broken toward the
/// lower index, returned in ascending order.
std::vector<Index> select_top_k(const Eigen::Ref<const Vector>& scores,
                                Scalar ratio);

/// Similarity used for edge re-prediction: cosine of the two feature rows
/// plus the current adjacency weight. A zero-norm row contributes 0 to the
/// cosine term instead of NaN.
Scalar edge_similarity(const Eigen::Ref<const Matrix>& feats,
                       const AdjacencyMatrix& adj, Index p, Index q);

/// Re-predicts edges among the selected nodes. For each survivor p the
/// candidate set is the selected nodes within two hops of p in `adj` plus p
/// itself; similarities over the candidates are sparsemax-normalized and the
/// self-weight is dropped afterwards, so every row sums to at most 1.
/// The result is directed and indexed by position in `selected`.
AdjacencyMatrix predict_edges(const Eigen::Ref<const Matrix>& feats,
                              const AdjacencyMatrix& adj,
                              const std::vector<Index>& selected);

/// Runs `cfg.layers` rounds of score -> select -> re-predict and maps the
/// surviving indices back to the original numbering.
PoolingResult pool_graph(const AdjacencyMatrix& adj,
                         const Eigen::Ref<const Matrix>& feats,
                         const PoolingConfig& cfg);

/// Lays the selected nodes' feature rows into an n_nodes*feat_dim sparse
/// vector, block i at positions [i*feat_dim, (i+1)*feat_dim).
SparseFeatureVector sparse_flatten(const PoolingResult& res, Index n_nodes,
                                   Index feat_dim);

// --- serialization ----------------------------------------------------------
//
// Binary layout (little-endian): magic "NPSFV001", u32 format version,
// length-prefixed subject id, u32 n_nodes, u32 feat_dim, f64 ratio,
// u64 entry count, then (u64 position, f64 value) pairs.

struct SparseVectorFile {
  std::string subject_id;
  std::uint32_t n_nodes = 0;
  std::uint32_t feat_dim = 0;
  Scalar ratio = 0.0;
  SparseFeatureVector vec;
};

void write_sparse_vector(const std::filesystem::path& path,
                         const SparseVectorFile& file);
SparseVectorFile read_sparse_vector(const std::filesystem::path& path);

/// Human-readable companion: a `# schema=...` metadata line followed by
/// `position,value` rows.
void write_sparse_vector_csv(const std::filesystem::path& path,
                             const SparseVectorFile& file);

}  // namespace neuropool
