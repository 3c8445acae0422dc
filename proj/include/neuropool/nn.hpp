// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neuropool/population.hpp"
#include "neuropool/rng.hpp"
#include "neuropool/types.hpp"

namespace neuropool::nn {

// --- parameters and optimizer ------------------------------------------------

struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix m;  // Adam first moment, same shape as value
  Matrix v;  // Adam second moment
  bool decay = true;  // weight matrices decay, biases do not
};

struct ModelState {
  std::vector<ParamTensor> params;
  std::int64_t step = 0;

  bool bitwise_equal(const ModelState& other) const;
};

struct AdamConfig {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 0.01;  // decoupled shrinkage, applied after the
                               // moment update and only to decaying tensors
};

/// One Adam update with bias correction followed by decoupled weight decay:
/// theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta.
void adam_step(ModelState& state, const std::vector<Matrix>& grads,
               const AdamConfig& cfg);

// --- activations / dropout ---------------------------------------------------

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// Inverted-scaling dropout mask: each entry is 1/(1-p) with probability
/// 1-p and 0 otherwise, so the masked activation is unbiased in expectation.
/// Entries are drawn row-major from `rng`. p = 0 yields the all-ones mask.
Matrix dropout_mask(Index rows, Index cols, Scalar p, RngStream& rng);

// --- losses ------------------------------------------------------------------

inline Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Probability clamp bound for the binary cross-entropy; the loss is
/// undefined at exactly 0 or 1.
constexpr Scalar kBceEps = 1e-12;

/// -[y ln z + (1-y) ln(1-z)] with z clamped to [kBceEps, 1-kBceEps].
Scalar bce_loss(int y, Scalar z);

/// dL/dz at the clamped point; 0 inside the clamped (flat) region.
Scalar bce_backward(int y, Scalar z);

/// d bce(y, sigmoid(logit)) / d logit = z - y, except in the clamp region
/// where the loss is flat and the derivative is 0.
Scalar bce_sigmoid_dlogit(int y, Scalar z);

/// Mean softmax cross-entropy over all rows; fills dlogits (already divided
/// by the row count) when non-null. labels[i] indexes the true class of
/// row i.
Scalar softmax_cross_entropy(const Eigen::Ref<const Matrix>& logits,
                             const std::vector<int>& labels,
                             Matrix* dlogits = nullptr);

/// Probability of class 1 under a two-class softmax head.
Vector softmax_prob1(const Eigen::Ref<const Matrix>& logits);

/// Hard labels at the 0.5 threshold (strictly greater maps to 1).
std::vector<int> hard_labels(const Eigen::Ref<const Vector>& probs);

// --- MLP feature extractor ---------------------------------------------------

struct MlpConfig {
  Index input_dim = 0;
  std::vector<Index> hidden = {256, 128};  // last width is the embedding
  Index n_classes = 2;
  Scalar dropout = 0.01;
  std::uint64_t init_seed = 1;

  Index embedding_dim() const { return hidden.empty() ? 0 : hidden.back(); }
  void validate() const;
};

/// Parameter layout: [W0, b0, W1, b1, ..., W_out, b_out].
/// Weights start uniform in (-1, 1)/sqrt(fan_in), biases at zero.
ModelState mlp_init(const MlpConfig& cfg);

struct MlpCache {
  bool sparse_input = false;
  SpMatrix x_sparse;
  Matrix x_dense;
  std::vector<Matrix> pre;       // pre-activation per hidden layer
  std::vector<Matrix> dropped;   // post-ReLU, post-dropout per hidden layer
  std::vector<Matrix> masks;     // dropout masks (train mode with p > 0)
  bool train = false;
  std::int64_t step_stamp = -1;  // state step at forward time
};

struct MlpForward {
  Matrix logits;     // n x n_classes
  Matrix embedding;  // n x hidden.back(), post-ReLU, pre-dropout
  MlpCache cache;
};

MlpForward mlp_forward(const ModelState& state, const MlpConfig& cfg,
                       const SpMatrix& x, bool train, RngStream* rng);
MlpForward mlp_forward(const ModelState& state, const MlpConfig& cfg,
                       const Eigen::Ref<const Matrix>& x, bool train,
                       RngStream* rng);

/// Gradients w.r.t. every parameter, ordered like state.params.
/// dlogits must come from a loss over the same forward pass; a cache taken
/// before the last optimizer step is rejected as stale.
std::vector<Matrix> mlp_backward(const ModelState& state, const MlpConfig& cfg,
                                 const MlpCache& cache,
                                 const Eigen::Ref<const Matrix>& dlogits);

// --- GCN node classifier -----------------------------------------------------

struct GcnConfig {
  Index input_dim = 128;
  Index hidden = 64;
  Scalar dropout = 0.01;
  std::uint64_t init_seed = 2;

  void validate() const;
};

/// Parameter layout: [W1, W2, W3, b3]; the two graph layers are bias-free
/// and the per-node linear head has a scalar bias.
ModelState gcn_init(const GcnConfig& cfg);

/// Single propagation layer: relu(a_hat * h * w). a_hat is the precomputed
/// symmetric normalization of the graph.
Matrix gcn_layer(const Eigen::Ref<const Matrix>& a_hat,
                 const Eigen::Ref<const Matrix>& h,
                 const Eigen::Ref<const Matrix>& w);

struct GcnCache {
  Matrix m1;     // a_hat * x
  Matrix pre1;   // m1 * w1
  Matrix mask1;
  Matrix m2;     // a_hat * dropout(relu(pre1))
  Matrix pre2;   // m2 * w2
  Matrix mask2;
  Matrix h2d;    // dropout(relu(pre2))
  bool train = false;
  std::int64_t step_stamp = -1;
};

struct GcnForward {
  Vector logits;
  Vector probs;  // sigmoid(logits)
  GcnCache cache;
};

GcnForward gcn_forward(const ModelState& state, const GcnConfig& cfg,
                       const Eigen::Ref<const Matrix>& a_hat,
                       const Eigen::Ref<const Matrix>& x, bool train,
                       RngStream* rng);

std::vector<Matrix> gcn_backward(const ModelState& state, const GcnConfig& cfg,
                                 const Eigen::Ref<const Matrix>& a_hat,
                                 const GcnCache& cache,
                                 const Eigen::Ref<const Vector>& dlogits);

// --- cluster training --------------------------------------------------------

struct TrainConfig {
  Scalar lr = 1e-4;
  Scalar weight_decay = 0.01;
  int epochs = 200;
  int clusters = 1;
  bool best_val_checkpoint = true;  // fixed epoch budget, keep the state with
                                    // the best validation accuracy
  std::uint64_t seed = 7;           // dropout stream and cluster assignment
};

/// Balanced seeded random partition of [0, n) into `clusters` batches whose
/// sizes differ by at most one; batches are sorted internally. Pluggable
/// alternatives (e.g. graph-aware partitioners) must satisfy the same
/// disjoint-cover contract.
std::vector<std::vector<Index>> cluster_partition(Index n, int clusters,
                                                  RngStream& rng);

using Partitioner = std::function<std::vector<std::vector<Index>>(
    const PopulationGraph& pg, int clusters, RngStream& rng)>;

struct GcnStepResult {
  bool updated = false;  // false when the batch held no training nodes
  Scalar loss = 0.0;     // mean BCE over the batch's training nodes
};

/// One optimizer step on the subgraph induced by `batch` (intra-batch edges
/// only, renormalized): the mean BCE gradient over the batch's training
/// nodes, then one Adam update. Batches without training nodes are skipped
/// without consuming randomness.
GcnStepResult cluster_gcn_step(ModelState& state, const GcnConfig& cfg,
                               const PopulationGraph& pg,
                               const std::vector<Index>& batch,
                               const std::vector<char>& is_train,
                               const TrainConfig& tc, RngStream& rng);

/// Reference path: one step on the whole graph with the mean gradient over
/// all training nodes. A single-cluster partition reproduces this exactly.
GcnStepResult full_batch_gcn_step(ModelState& state, const GcnConfig& cfg,
                                  const Eigen::Ref<const Matrix>& a_hat_full,
                                  const PopulationGraph& pg,
                                  const std::vector<char>& is_train,
                                  const TrainConfig& tc, RngStream& rng);

struct GcnTrainResult {
  ModelState state;
  int best_epoch = -1;
  Scalar best_val_accuracy = 0.0;
  std::vector<Scalar> epoch_loss;
};

/// Trains on pg.features/pg.labels with loss restricted to train_idx.
/// With best_val_checkpoint and a non-empty val_idx, returns the state of
/// the best validation epoch; otherwise the final state.
GcnTrainResult train_gcn(const GcnConfig& cfg, const PopulationGraph& pg,
                         const std::vector<Index>& train_idx,
                         const std::vector<Index>& val_idx,
                         const TrainConfig& tc,
                         const Partitioner& partitioner = nullptr);

/// Eval-mode probabilities for every node of the population graph.
Vector gcn_predict(const ModelState& state, const GcnConfig& cfg,
                   const Eigen::Ref<const Matrix>& a_hat,
                   const Eigen::Ref<const Matrix>& x);

// --- MLP training ------------------------------------------------------------

struct MlpTrainResult {
  ModelState state;
  int best_epoch = -1;
  Scalar best_val_accuracy = 0.0;
  std::vector<Scalar> epoch_loss;
};

/// Full-batch Adam on the rows `train_rows` of x; tracks accuracy on
/// `val_rows` after every epoch and keeps the best checkpoint (ties keep the
/// earlier epoch).
MlpTrainResult train_mlp(const MlpConfig& cfg, const SpMatrix& x,
                         const std::vector<int>& labels,
                         const std::vector<Index>& train_rows,
                         const std::vector<Index>& val_rows,
                         const TrainConfig& tc);

/// Eval-mode class-1 probabilities and embeddings for every row of x.
struct MlpEval {
  Vector probs;
  Matrix embedding;
};
MlpEval mlp_predict(const ModelState& state, const MlpConfig& cfg,
                    const SpMatrix& x);

// --- checkpoint container ----------------------------------------------------
//
// Binary layout (little-endian): magic "NPCKPT01", u32 format version,
// kind string, config-echo JSON string, u64 tensor count, then per tensor:
// name, u8 decay flag, u64 rows, u64 cols, and rows*cols f64 triples
// (value, first moment, second moment as three consecutive blocks),
// finally the i64 step counter. A JSON sidecar `<path>.json` mirrors the
// metadata for tooling.

void save_checkpoint(const std::filesystem::path& path,
                     const ModelState& state, const std::string& kind,
                     const std::string& config_json);

struct Checkpoint {
  ModelState state;
  std::string kind;
  std::string config_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace neuropool::nn
