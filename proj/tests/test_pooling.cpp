// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "neuropool/pooling.hpp"
#include "neuropool/sparsemax.hpp"
#include "oracles.hpp"

using namespace neuropool;

namespace {

// Exhaustive-ranking reference for top-k with the lower-index tie rule.
std::vector<Index> topk_oracle(const Vector& s, Scalar ratio) {
  const Index n = s.size();
  auto k = static_cast<Index>(
      std::ceil(ratio * static_cast<long double>(n) - 1e-9L));
  k = std::clamp<Index>(k, 1, n);
  std::vector<Index> picked;
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  for (Index round = 0; round < k; ++round) {
    Index best = -1;
    for (Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || s[i] > s[best]) best = i;  // strict: ties keep lower i
    }
    used[static_cast<std::size_t>(best)] = 1;
    picked.push_back(best);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

TEST_CASE("information score is zero when a node equals its neighbor mean") {
  AdjacencyMatrix adj(4);
  adj.set(0, 1, 1.0);
  adj.set(0, 2, 1.0);
  adj.set(0, 3, 2.0);
  Matrix feats(4, 3);
  feats.row(1) << 1.0, 2.0, 3.0;
  feats.row(2) << -1.0, 0.0, 5.0;
  feats.row(3) << 2.0, 2.0, 2.0;
  feats.row(0) = neighbor_mean(adj, feats).row(0);  // plant the redundancy
  const Vector s = information_score(adj, feats);
  CHECK(s[0] <= 1e-12);
  CHECK(s[1] > 0.0);
}

TEST_CASE("information score of a two-node graph with features 1 and 0") {
  AdjacencyMatrix adj(2);
  adj.set(0, 1, 1.0);
  Matrix feats(2, 1);
  feats << 1.0, 0.0;
  const Vector s = information_score(adj, feats);
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("information score matches the dense oracle") {
  RngStream rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto adj = oracles::random_undirected(10, 0.4, rng, true);
    const Matrix feats = oracles::random_matrix(10, 4, rng);
    const Vector ours = information_score(adj, feats);
    const Vector expected =
        oracles::dense_information_score(adj.to_dense(), feats);
    CHECK((ours - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("top-k sizes follow the ceiling rule") {
  Vector s = Vector::Random(111);
  CHECK(select_top_k(s, 0.05).size() == 6);   // ceil(5.55)
  CHECK(select_top_k(s, 0.01).size() == 2);   // ceil(1.11)
  CHECK(select_top_k(s, 1.0).size() == 111);
  Vector s10 = Vector::Random(10);
  CHECK(select_top_k(s10, 0.1).size() == 1);  // 0.1*10 must not round up to 2
}

TEST_CASE("top-k breaks ties toward the lower index") {
  Vector s(4);
  s << 3.0, 1.0, 3.0, 0.0;
  const auto picked = select_top_k(s, 0.5);
  CHECK(picked == std::vector<Index>{0, 2});
}

TEST_CASE("top-k matches the exhaustive ranking oracle") {
  RngStream rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.below(30));
    Vector s(n);
    for (Index i = 0; i < n; ++i) {
      // Coarse values force frequent ties.
      s[i] = static_cast<Scalar>(rng.below(5));
    }
    const Scalar ratio = 0.01 + 0.99 * rng.uniform01();
    CHECK(select_top_k(s, ratio) == topk_oracle(s, ratio));
  }
}

TEST_CASE("edge similarity adds the current adjacency weight to the cosine") {
  AdjacencyMatrix adj(3);
  adj.set(0, 1, 1.0);
  Matrix feats(3, 2);
  feats.row(0) << 2.0, 0.0;
  feats.row(1) << 4.0, 0.0;  // parallel to row 0
  feats.row(2) << 0.0, 3.0;  // orthogonal to row 0
  CHECK(edge_similarity(feats, adj, 0, 2) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(edge_similarity(feats, adj, 0, 1) == doctest::Approx(2.0).epsilon(1e-15));
  AdjacencyMatrix no_edge(3);
  CHECK(edge_similarity(feats, no_edge, 0, 1) ==
        doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("edge similarity treats zero-norm rows as cosine 0") {
  AdjacencyMatrix adj(2);
  adj.set(0, 1, 0.5);
  Matrix feats = Matrix::Zero(2, 3);
  feats.row(1) << 1.0, 1.0, 1.0;
  CHECK(edge_similarity(feats, adj, 0, 1) == 0.5);
}

TEST_CASE("sparsemax fixes simplex vertices and known projections") {
  Vector e2(3);
  e2 << 0.0, 0.0, 1.0;
  CHECK((sparsemax(e2) - e2).cwiseAbs().maxCoeff() == 0.0);

  Vector z(2);
  z << 1.0, 0.5;
  const Vector p = sparsemax(z);
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));

  Vector spike(3);
  spike << 2.0, 0.0, 0.0;
  const Vector q = sparsemax(spike);
  CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 0.0);
}

TEST_CASE("sparsemax outputs are valid distributions") {
  RngStream rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(64));
    const Scalar scale = std::pow(10.0, 2.0 * rng.uniform01() - 1.0);
    Vector z = oracles::random_matrix(k, 1, rng, scale).col(0);
    const Vector p = sparsemax(z);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("sparsemax is shift-invariant") {
  RngStream rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(16));
    const Vector z = oracles::random_matrix(k, 1, rng, 2.0).col(0);
    const Scalar c = 10.0 * (rng.uniform01() - 0.5);
    const Vector shifted = z.array() + c;
    CHECK((sparsemax(z) - sparsemax(shifted)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("sparsemax agrees with the support-enumeration QP oracle") {
  RngStream rng(25);
  for (int trial = 0; trial < 200; ++trial) {
    const Index k = 1 + static_cast<Index>(rng.below(10));
    Vector z = oracles::random_matrix(k, 1, rng, 1.5).col(0);
    if (trial % 3 == 0 && k > 1) z[k - 1] = z[0];  // force ties
    const auto expected = oracles::sparsemax_qp(z);
    REQUIRE(expected.has_value());
    CHECK((sparsemax(z) - *expected).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("predict_edges links identical direct neighbors strongly") {
  AdjacencyMatrix adj(3);
  adj.set(0, 1, 1.0);
  Matrix feats(3, 2);
  feats.row(0) << 1.0, 2.0;
  feats.row(1) << 1.0, 2.0;
  feats.row(2) << -5.0, 1.0;
  const auto pooled = predict_edges(feats, adj, {0, 1});
  // Candidate rows are {self, other}; similarity to the twin is cosine 1
  // plus edge weight 1 versus self-similarity 1, so the twin dominates.
  CHECK(pooled.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pooled.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pooled.at(0, 0) == 0.0);  // self-weights dropped
}

TEST_CASE("predict_edges never links nodes beyond two hops") {
  // Two 2-cliques joined only through a long path: 0-1   2-3, plus a bridge
  // 1-4-5-2 keeping 1 and 2 four hops apart.
  AdjacencyMatrix adj(6);
  adj.set(0, 1, 1.0);
  adj.set(2, 3, 1.0);
  adj.set(1, 4, 1.0);
  adj.set(4, 5, 1.0);
  adj.set(5, 2, 1.0);
  Matrix feats = Matrix::Ones(6, 2);  // all parallel: similarity is no obstacle
  const auto pooled = predict_edges(feats, adj, {0, 3});
  CHECK(pooled.at(0, 1) == 0.0);
  CHECK(pooled.at(1, 0) == 0.0);
  CHECK(pooled.edge_count() == 0);
}

TEST_CASE("predict_edges splits a triangle of identical features evenly") {
  AdjacencyMatrix adj(3);
  adj.set(0, 1, 1.0);
  adj.set(1, 2, 1.0);
  adj.set(0, 2, 1.0);
  Matrix feats = Matrix::Constant(3, 4, 2.0);
  const auto pooled = predict_edges(feats, adj, {0, 1, 2});
  for (Index p = 0; p < 3; ++p) {
    Scalar row_sum = 0.0;
    for (Index q = 0; q < 3; ++q) {
      if (p == q) {
        CHECK(pooled.at(p, q) == 0.0);
      } else {
        CHECK(pooled.at(p, q) == doctest::Approx(0.5).epsilon(1e-12));
        row_sum += pooled.at(p, q);
      }
    }
    CHECK(row_sum <= 1.0 + 1e-9);
  }
}

TEST_CASE("predict_edges discovers latent two-hop connections") {
  RngStream rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    // 0 and 2 are not adjacent but share neighbor 1; their features are
    // nearly parallel, so a new edge should appear between them.
    AdjacencyMatrix adj(3);
    adj.set(0, 1, 1.0);
    adj.set(1, 2, 1.0);
    Matrix feats(3, 4);
    const Matrix base = oracles::random_matrix(1, 4, rng);
    feats.row(0) = base.row(0);
    feats.row(1) = -3.0 * base.row(0);
    feats.row(2) = base.row(0) * (1.0 + 1e-3 * rng.uniform01());
    const auto pooled = predict_edges(feats, adj, {0, 2});
    CHECK(pooled.at(0, 1) > 0.0);
    CHECK(pooled.at(1, 0) > 0.0);
  }
}

TEST_CASE("isolated selections stay isolated") {
  AdjacencyMatrix adj(4);
  adj.set(0, 1, 1.0);
  adj.set(2, 3, 1.0);
  Matrix feats = Matrix::Ones(4, 2);
  const auto pooled = predict_edges(feats, adj, {0, 2});
  CHECK(pooled.edge_count() == 0);  // each keeps only itself, then drops it
}

TEST_CASE("pool_graph with ratio 1 is the identity on features") {
  RngStream rng(27);
  const auto adj = oracles::random_undirected(7, 0.5, rng);
  const Matrix feats = oracles::random_matrix(7, 3, rng);
  PoolingConfig cfg;
  cfg.ratio = 1.0;
  const auto res = pool_graph(adj, feats, cfg);
  CHECK(res.selected.size() == 7);
  CHECK(std::memcmp(res.pooled_feats.data(), feats.data(),
                    sizeof(Scalar) * static_cast<std::size_t>(feats.size())) ==
        0);
}

TEST_CASE("pool_graph keeps ceil(r*n) nodes and bounded row sums") {
  RngStream rng(28);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 5 + static_cast<Index>(rng.below(40));
    const auto adj = oracles::random_undirected(n, 0.3, rng);
    const Matrix feats = oracles::random_matrix(n, 6, rng);
    PoolingConfig cfg;
    cfg.ratio = 0.05 + 0.9 * rng.uniform01();
    const auto res = pool_graph(adj, feats, cfg);
    const auto expected =
        static_cast<std::size_t>(std::ceil(cfg.ratio * static_cast<Scalar>(n) - 1e-9));
    CHECK(res.selected.size() == expected);
    CHECK(std::is_sorted(res.selected.begin(), res.selected.end()));

    Vector row_sums = Vector::Zero(res.pooled_adj.node_count());
    for (const auto& [key, w] : res.pooled_adj.entries()) {
      CHECK(w > 0.0);
      row_sums[key.first] += w;
    }
    CHECK(row_sums.maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("pooling a 111-node graph at the reference ratios") {
  RngStream rng(29);
  const auto adj = oracles::random_undirected(111, 0.2, rng);
  const Matrix feats = oracles::random_matrix(111, 8, rng);
  PoolingConfig cfg;
  cfg.ratio = 0.05;
  CHECK(pool_graph(adj, feats, cfg).selected.size() == 6);
  cfg.ratio = 0.01;
  CHECK(pool_graph(adj, feats, cfg).selected.size() == 2);
}

TEST_CASE("pool_graph is bit-deterministic") {
  RngStream rng(30);
  const auto adj = oracles::random_undirected(20, 0.4, rng);
  const Matrix feats = oracles::random_matrix(20, 5, rng);
  PoolingConfig cfg;
  cfg.ratio = 0.3;
  const auto a = pool_graph(adj, feats, cfg);
  const auto b = pool_graph(adj, feats, cfg);
  CHECK(a.selected == b.selected);
  CHECK(a.pooled_adj == b.pooled_adj);
  CHECK(std::memcmp(a.pooled_feats.data(), b.pooled_feats.data(),
                    sizeof(Scalar) *
                        static_cast<std::size_t>(a.pooled_feats.size())) == 0);
}

TEST_CASE("two-layer pooling records a trace and composes selections") {
  RngStream rng(31);
  const auto adj = oracles::random_undirected(30, 0.4, rng);
  const Matrix feats = oracles::random_matrix(30, 4, rng);
  PoolingConfig cfg;
  cfg.ratio = 0.5;
  cfg.layers = 2;
  const auto res = pool_graph(adj, feats, cfg);
  REQUIRE(res.layer_trace.size() == 2);
  CHECK(res.layer_trace[0].scores.size() == 30);
  CHECK(res.layer_trace[0].selected_original.size() == 15);
  CHECK(res.layer_trace[1].scores.size() == 15);
  CHECK(res.layer_trace[1].selected_original.size() == 8);  // ceil(7.5)
  CHECK(res.selected == res.layer_trace[1].selected_original);
  for (Index node : res.selected) {
    CHECK(std::find(res.layer_trace[0].selected_original.begin(),
                    res.layer_trace[0].selected_original.end(),
                    node) != res.layer_trace[0].selected_original.end());
  }
}

TEST_CASE("sparse_flatten lays blocks at the selected slots") {
  PoolingResult res;
  res.selected = {0};
  res.pooled_feats = Matrix(1, 2);
  res.pooled_feats << 3.5, -1.25;
  const auto vec = sparse_flatten(res, 3, 2);
  CHECK(vec.total_len == 6);
  REQUIRE(vec.entries.size() == 2);
  CHECK(vec.entries[0] == std::pair<std::uint64_t, Scalar>{0, 3.5});
  CHECK(vec.entries[1] == std::pair<std::uint64_t, Scalar>{1, -1.25});
}

TEST_CASE("sparse_flatten of a full selection is the dense row-major flatten") {
  RngStream rng(32);
  const auto adj = oracles::random_undirected(6, 0.5, rng);
  const Matrix feats = oracles::random_matrix(6, 3, rng);
  PoolingConfig cfg;
  cfg.ratio = 1.0;
  const auto res = pool_graph(adj, feats, cfg);
  const Vector dense = sparse_flatten(res, 6, 3).to_dense();
  for (Index i = 0; i < 6; ++i) {
    for (Index d = 0; d < 3; ++d) {
      CHECK(dense[i * 3 + d] == feats(i, d));
    }
  }
}

TEST_CASE("sparse_flatten matches the mask-and-flatten oracle") {
  RngStream rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const auto adj = oracles::random_undirected(10, 0.4, rng);
    const Matrix feats = oracles::random_matrix(10, 4, rng);
    PoolingConfig cfg;
    cfg.ratio = 0.4;
    const auto res = pool_graph(adj, feats, cfg);
    const Vector dense = sparse_flatten(res, 10, 4).to_dense();

    Vector expected = Vector::Zero(40);
    for (Index i = 0; i < 10; ++i) {
      const bool kept = std::find(res.selected.begin(), res.selected.end(),
                                  i) != res.selected.end();
      if (!kept) continue;
      for (Index d = 0; d < 4; ++d) expected[i * 4 + d] = feats(i, d);
    }
    CHECK((dense - expected).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("sparse vector files round-trip bit-exactly") {
  RngStream rng(34);
  SparseVectorFile file;
  file.subject_id = "subj-0042";
  file.n_nodes = 10;
  file.feat_dim = 4;
  file.ratio = 0.4;
  file.vec.total_len = 40;
  for (std::uint64_t pos : {3ULL, 8ULL, 21ULL, 39ULL}) {
    file.vec.entries.emplace_back(pos, rng.normal());
  }
  const auto dir = std::filesystem::temp_directory_path() / "nptest_sfv";
  std::filesystem::create_directories(dir);
  const auto path = dir / "subj-0042.npsv";
  write_sparse_vector(path, file);
  const auto back = read_sparse_vector(path);
  CHECK(back.subject_id == file.subject_id);
  CHECK(back.n_nodes == file.n_nodes);
  CHECK(back.feat_dim == file.feat_dim);
  CHECK(std::memcmp(&back.ratio, &file.ratio, sizeof(Scalar)) == 0);
  CHECK(back.vec.total_len == file.vec.total_len);
  REQUIRE(back.vec.entries.size() == file.vec.entries.size());
  for (std::size_t i = 0; i < file.vec.entries.size(); ++i) {
    CHECK(back.vec.entries[i].first == file.vec.entries[i].first);
    CHECK(std::memcmp(&back.vec.entries[i].second, &file.vec.entries[i].second,
                      sizeof(Scalar)) == 0);
  }
  write_sparse_vector_csv(dir / "subj-0042.npsv.csv", file);
  CHECK(std::filesystem::file_size(dir / "subj-0042.npsv.csv") > 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("pooling config validation") {
  PoolingConfig cfg;
  cfg.ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg.ratio = 1.5;
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg.ratio = 0.5;
  cfg.layers = 0;
  CHECK_THROWS_AS(cfg.validate(), DataError);
}
