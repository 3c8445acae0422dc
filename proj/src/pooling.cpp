// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "neuropool/io.hpp"
#include "neuropool/sparsemax.hpp"

namespace neuropool {

void PoolingConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DataError("pooling: ratio must lie in (0, 1]");
  }
  if (layers < 1) {
    throw DataError("pooling: layers must be >= 1");
  }
}

Vector SparseFeatureVector::to_dense() const {
  Vector dense = Vector::Zero(static_cast<Index>(total_len));
  for (const auto& [pos, val] : entries) {
    dense[static_cast<Index>(pos)] = val;
  }
  return dense;
}

Vector information_score(const AdjacencyMatrix& adj,
                         const Eigen::Ref<const Matrix>& feats) {
  const Matrix mean = neighbor_mean(adj, feats);
  return (feats - mean).cwiseAbs().rowwise().sum();
}

std::vector<Index> select_top_k(const Eigen::Ref<const Vector>& scores,
                                Scalar ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw DataError("select_top_k: ratio must lie in (0, 1]");
  }
  if (!scores.allFinite()) {
    throw NumericError("select_top_k: non-finite score");
  }
  const Index n = scores.size();
  // ceil(ratio * n); the epsilon absorbs representation noise in ratio * n
  // (e.g. 0.1 * 10 landing a hair above 1.0) without changing genuine
  // fractional products.
  Index k = static_cast<Index>(std::ceil(ratio * static_cast<Scalar>(n) - 1e-9));
  k = std::clamp<Index>(k, 1, n);

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // ties keep the lower index
  });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Scalar edge_similarity(const Eigen::Ref<const Matrix>& feats,
                       const AdjacencyMatrix& adj, Index p, Index q) {
  const Scalar norm_p = feats.row(p).norm();
  const Scalar norm_q = feats.row(q).norm();
  Scalar cosine = 0.0;  // flat-lined rows contribute no cosine term
  if (norm_p > 0.0 && norm_q > 0.0) {
    cosine = feats.row(p).dot(feats.row(q)) / (norm_p * norm_q);
  }
  return cosine + adj.at(p, q);
}

namespace {

// Out-neighbor lists (self-loops dropped), in ascending index order.
std::vector<std::vector<Index>> neighbor_lists(const AdjacencyMatrix& adj) {
  std::vector<std::vector<Index>> nbrs(adj.node_count());
  for (const auto& [key, w] : adj.entries()) {
    if (w > 0.0 && key.first != key.second) {
      nbrs[key.first].push_back(key.second);
    }
  }
  return nbrs;
}

}  // namespace

AdjacencyMatrix predict_edges(const Eigen::Ref<const Matrix>& feats,
                              const AdjacencyMatrix& adj,
                              const std::vector<Index>& selected) {
  if (selected.empty()) {
    throw DataError("predict_edges: selection must be non-empty");
  }
  const auto nbrs = neighbor_lists(adj);
  std::vector<Index> local_of(adj.node_count(), -1);
  for (std::size_t a = 0; a < selected.size(); ++a) {
    local_of[selected[a]] = static_cast<Index>(a);
  }

  AdjacencyMatrix pooled(static_cast<Index>(selected.size()),
                         /*undirected=*/false);
  std::vector<Index> candidates;
  for (std::size_t a = 0; a < selected.size(); ++a) {
    const Index p = selected[a];

    // Selected nodes reachable from p within two hops, plus p itself.
    std::set<Index> reach;
    for (Index m : nbrs[p]) {
      reach.insert(m);
      for (Index q : nbrs[m]) reach.insert(q);
    }
    reach.erase(p);

    candidates.clear();
    candidates.push_back(p);
    for (Index q : reach) {
      if (local_of[q] >= 0) candidates.push_back(q);
    }
    std::sort(candidates.begin(), candidates.end());

    Vector sims(static_cast<Index>(candidates.size()));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      sims[static_cast<Index>(c)] = edge_similarity(feats, adj, p, candidates[c]);
    }
    const Vector weights = sparsemax(sims);

    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const Index q = candidates[c];
      const Scalar w = weights[static_cast<Index>(c)];
      if (q != p && w > 0.0) {
        pooled.set(static_cast<Index>(a), local_of[q], w);
      }
    }
  }
  return pooled;
}

PoolingResult pool_graph(const AdjacencyMatrix& adj,
                         const Eigen::Ref<const Matrix>& feats,
                         const PoolingConfig& cfg) {
  cfg.validate();
  if (adj.node_count() != feats.rows()) {
    throw DataError("pool_graph: adjacency and feature row counts differ");
  }

  PoolingResult res;
  AdjacencyMatrix cur_adj = adj;
  Matrix cur_feats = feats;
  std::vector<Index> to_original(cur_adj.node_count());
  std::iota(to_original.begin(), to_original.end(), Index{0});

  for (int layer = 0; layer < cfg.layers; ++layer) {
    const Vector scores = information_score(cur_adj, cur_feats);
    const std::vector<Index> picked = select_top_k(scores, cfg.ratio);

    PoolingLayerTrace trace;
    trace.scores = scores;
    trace.selected_original.reserve(picked.size());
    for (Index p : picked) trace.selected_original.push_back(to_original[p]);
    res.layer_trace.push_back(std::move(trace));

    cur_adj = predict_edges(cur_feats, cur_adj, picked);

    Matrix next_feats(static_cast<Index>(picked.size()), cur_feats.cols());
    std::vector<Index> next_map(picked.size());
    for (std::size_t a = 0; a < picked.size(); ++a) {
      next_feats.row(static_cast<Index>(a)) = cur_feats.row(picked[a]);
      next_map[a] = to_original[picked[a]];
    }
    cur_feats = std::move(next_feats);
    to_original = std::move(next_map);
  }

  res.selected = to_original;
  res.pooled_adj = std::move(cur_adj);
  res.pooled_feats = std::move(cur_feats);
  return res;
}

SparseFeatureVector sparse_flatten(const PoolingResult& res, Index n_nodes,
                                   Index feat_dim) {
  if (res.pooled_feats.cols() != feat_dim) {
    throw DataError("sparse_flatten: feat_dim does not match pooled features");
  }
  SparseFeatureVector vec;
  vec.total_len =
      static_cast<std::uint64_t>(n_nodes) * static_cast<std::uint64_t>(feat_dim);
  vec.entries.reserve(res.selected.size() * static_cast<std::size_t>(feat_dim));
  for (std::size_t a = 0; a < res.selected.size(); ++a) {
    const Index node = res.selected[a];
    if (node < 0 || node >= n_nodes) {
      throw DataError("sparse_flatten: selected index out of range");
    }
    const std::uint64_t base =
        static_cast<std::uint64_t>(node) * static_cast<std::uint64_t>(feat_dim);
    for (Index d = 0; d < feat_dim; ++d) {
      vec.entries.emplace_back(base + static_cast<std::uint64_t>(d),
                               res.pooled_feats(static_cast<Index>(a), d));
    }
  }
  return vec;
}

// --- serialization ----------------------------------------------------------

namespace {
constexpr char kSparseVectorMagic[8] = {'N', 'P', 'S', 'F', 'V', '0', '0', '1'};
constexpr std::uint32_t kSparseVectorVersion = 1;
}  // namespace

void write_sparse_vector(const std::filesystem::path& path,
                         const SparseVectorFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kSparseVectorMagic, sizeof(kSparseVectorMagic));
  io::write_u32(out, kSparseVectorVersion);
  io::write_string(out, file.subject_id);
  io::write_u32(out, file.n_nodes);
  io::write_u32(out, file.feat_dim);
  io::write_f64(out, file.ratio);
  io::write_u64(out, file.vec.total_len);
  io::write_u64(out, file.vec.entries.size());
  for (const auto& [pos, val] : file.vec.entries) {
    io::write_u64(out, pos);
    io::write_f64(out, val);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

SparseVectorFile read_sparse_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kSparseVectorMagic)) {
    throw DataError("not a sparse-vector file: " + path.string());
  }
  if (io::read_u32(in) != kSparseVectorVersion) {
    throw DataError("unsupported sparse-vector version: " + path.string());
  }
  SparseVectorFile file;
  file.subject_id = io::read_string(in);
  file.n_nodes = io::read_u32(in);
  file.feat_dim = io::read_u32(in);
  file.ratio = io::read_f64(in);
  file.vec.total_len = io::read_u64(in);
  const std::uint64_t count = io::read_u64(in);
  file.vec.entries.resize(count);
  for (auto& [pos, val] : file.vec.entries) {
    pos = io::read_u64(in);
    val = io::read_f64(in);
  }
  if (!in) throw DataError("truncated sparse-vector file: " + path.string());
  return file;
}

void write_sparse_vector_csv(const std::filesystem::path& path,
                             const SparseVectorFile& file) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "# schema=npsv-csv.v1 subject=" << file.subject_id
      << " n_nodes=" << file.n_nodes << " feat_dim=" << file.feat_dim
      << " ratio=" << io::format_f64(file.ratio) << "\n";
  out << "position,value\n";
  for (const auto& [pos, val] : file.vec.entries) {
    out << pos << ',' << io::format_f64(val) << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace neuropool
