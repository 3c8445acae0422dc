// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "neuropool/io.hpp"

namespace neuropool::nn {

// --- parameters and optimizer ------------------------------------------------

bool ModelState::bitwise_equal(const ModelState& other) const {
  if (step != other.step || params.size() != other.params.size()) return false;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& a = params[k];
    const auto& b = other.params[k];
    if (a.name != b.name || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols()) {
      return false;
    }
    const auto bytes = static_cast<std::size_t>(a.value.size()) * sizeof(Scalar);
    if (std::memcmp(a.value.data(), b.value.data(), bytes) != 0) return false;
    if (std::memcmp(a.m.data(), b.m.data(), bytes) != 0) return false;
    if (std::memcmp(a.v.data(), b.v.data(), bytes) != 0) return false;
  }
  return true;
}

void adam_step(ModelState& state, const std::vector<Matrix>& grads,
               const AdamConfig& cfg) {
  if (grads.size() != state.params.size()) {
    throw DataError("adam_step: gradient count does not match parameters");
  }
  state.step += 1;
  const Scalar bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Scalar>(state.step));
  const Scalar bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Scalar>(state.step));
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    ParamTensor& p = state.params[k];
    const Matrix& g = grads[k];
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      throw DataError("adam_step: gradient shape mismatch for " + p.name);
    }
    p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * g;
    p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Matrix update =
        (cfg.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps))
            .matrix();
    if (p.decay && cfg.weight_decay != 0.0) {
      p.value = p.value - update - (cfg.lr * cfg.weight_decay) * p.value;
    } else {
      p.value -= update;
    }
  }
}

Matrix dropout_mask(Index rows, Index cols, Scalar p, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw DataError("dropout probability must lie in [0, 1)");
  }
  Matrix mask(rows, cols);
  const Scalar keep_scale = 1.0 / (1.0 - p);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      mask(i, j) = rng.uniform01() >= p ? keep_scale : 0.0;
    }
  }
  return mask;
}

// --- losses ------------------------------------------------------------------

Scalar bce_loss(int y, Scalar z) {
  const Scalar zc = std::clamp(z, kBceEps, 1.0 - kBceEps);
  return y == 1 ? -std::log(zc) : -std::log(1.0 - zc);
}

Scalar bce_backward(int y, Scalar z) {
  if (z <= kBceEps || z >= 1.0 - kBceEps) return 0.0;  // clamped, flat
  return y == 1 ? -1.0 / z : 1.0 / (1.0 - z);
}

Scalar bce_sigmoid_dlogit(int y, Scalar z) {
  if (z <= kBceEps || z >= 1.0 - kBceEps) return 0.0;
  return z - static_cast<Scalar>(y);
}

Scalar softmax_cross_entropy(const Eigen::Ref<const Matrix>& logits,
                             const std::vector<int>& labels,
                             Matrix* dlogits) {
  const Index n = logits.rows();
  if (static_cast<Index>(labels.size()) != n) {
    throw DataError("softmax_cross_entropy: label count mismatch");
  }
  if (dlogits) dlogits->setZero(n, logits.cols());
  Scalar total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Scalar max_logit = logits.row(i).maxCoeff();
    const RowVector exps =
        (logits.row(i).array() - max_logit).exp().matrix();
    const Scalar denom = exps.sum();
    total += max_logit + std::log(denom) - logits(i, labels[i]);
    if (dlogits) {
      dlogits->row(i) = exps / denom;
      (*dlogits)(i, labels[i]) -= 1.0;
    }
  }
  if (dlogits) *dlogits /= static_cast<Scalar>(n);
  return total / static_cast<Scalar>(n);
}

Vector softmax_prob1(const Eigen::Ref<const Matrix>& logits) {
  if (logits.cols() != 2) {
    throw DataError("softmax_prob1: expected a two-class head");
  }
  Vector probs(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    probs[i] = sigmoid(logits(i, 1) - logits(i, 0));
  }
  return probs;
}

std::vector<int> hard_labels(const Eigen::Ref<const Vector>& probs) {
  std::vector<int> labels(static_cast<std::size_t>(probs.size()));
  for (Index i = 0; i < probs.size(); ++i) {
    labels[static_cast<std::size_t>(i)] = probs[i] > 0.5 ? 1 : 0;
  }
  return labels;
}

// --- MLP ----------------------------------------------------------------------

void MlpConfig::validate() const {
  if (input_dim < 1) throw DataError("mlp: input_dim must be >= 1");
  if (n_classes < 2) throw DataError("mlp: n_classes must be >= 2");
  for (Index h : hidden) {
    if (h < 1) throw DataError("mlp: hidden widths must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw DataError("mlp: dropout must lie in [0, 1)");
  }
}

namespace {

Matrix init_weight(Index fan_in, Index fan_out, RngStream& rng) {
  Matrix w(fan_in, fan_out);
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
  for (Index i = 0; i < fan_in; ++i) {
    for (Index j = 0; j < fan_out; ++j) {
      w(i, j) = (2.0 * rng.uniform01() - 1.0) * scale;
    }
  }
  return w;
}

ParamTensor make_param(std::string name, Matrix value, bool decay) {
  ParamTensor p;
  p.name = std::move(name);
  p.m = Matrix::Zero(value.rows(), value.cols());
  p.v = Matrix::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.decay = decay;
  return p;
}

}  // namespace

ModelState mlp_init(const MlpConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.init_seed);
  ModelState state;
  Index in = cfg.input_dim;
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
    const Index out = cfg.hidden[l];
    state.params.push_back(
        make_param("w" + std::to_string(l), init_weight(in, out, rng), true));
    state.params.push_back(
        make_param("b" + std::to_string(l), Matrix::Zero(1, out), false));
    in = out;
  }
  state.params.push_back(
      make_param("w_out", init_weight(in, cfg.n_classes, rng), true));
  state.params.push_back(
      make_param("b_out", Matrix::Zero(1, cfg.n_classes), false));
  return state;
}

namespace {

Matrix input_times(const MlpCache& cache, const Matrix& w) {
  return cache.sparse_input ? Matrix(cache.x_sparse * w)
                            : Matrix(cache.x_dense * w);
}

Index input_rows(const MlpCache& cache) {
  return cache.sparse_input ? cache.x_sparse.rows() : cache.x_dense.rows();
}

MlpForward mlp_forward_impl(const ModelState& state, const MlpConfig& cfg,
                            MlpCache cache, bool train, RngStream* rng) {
  cfg.validate();
  const std::size_t n_layers = cfg.hidden.size();
  if (state.params.size() != 2 * (n_layers + 1)) {
    throw DataError("mlp_forward: state does not match config");
  }
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (use_dropout && rng == nullptr) {
    throw DataError("mlp_forward: train-mode dropout needs an rng");
  }
  cache.train = train;
  cache.step_stamp = state.step;

  MlpForward out;
  Matrix act;  // output of the previous layer, post-dropout
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Matrix& w = state.params[2 * l].value;
    const Matrix& b = state.params[2 * l + 1].value;
    Matrix pre = (l == 0) ? input_times(cache, w) : Matrix(act * w);
    pre.rowwise() += b.row(0);
    Matrix h = relu(pre);
    cache.pre.push_back(std::move(pre));
    if (l + 1 == n_layers) out.embedding = h;
    if (use_dropout) {
      Matrix mask = dropout_mask(h.rows(), h.cols(), cfg.dropout, *rng);
      h = h.cwiseProduct(mask);
      cache.masks.push_back(std::move(mask));
    }
    cache.dropped.push_back(h);
    act = std::move(h);
  }
  const Matrix& w_out = state.params[2 * n_layers].value;
  const Matrix& b_out = state.params[2 * n_layers + 1].value;
  out.logits =
      (n_layers == 0) ? input_times(cache, w_out) : Matrix(act * w_out);
  out.logits.rowwise() += b_out.row(0);
  if (n_layers == 0) out.embedding = Matrix(input_rows(cache), 0);
  out.cache = std::move(cache);
  return out;
}

}  // namespace

MlpForward mlp_forward(const ModelState& state, const MlpConfig& cfg,
                       const SpMatrix& x, bool train, RngStream* rng) {
  if (x.cols() != cfg.input_dim) {
    throw DataError("mlp_forward: input has " + std::to_string(x.cols()) +
                    " columns, config expects " + std::to_string(cfg.input_dim));
  }
  MlpCache cache;
  cache.sparse_input = true;
  cache.x_sparse = x;
  return mlp_forward_impl(state, cfg, std::move(cache), train, rng);
}

MlpForward mlp_forward(const ModelState& state, const MlpConfig& cfg,
                       const Eigen::Ref<const Matrix>& x, bool train,
                       RngStream* rng) {
  if (x.cols() != cfg.input_dim) {
    throw DataError("mlp_forward: input has " + std::to_string(x.cols()) +
                    " columns, config expects " + std::to_string(cfg.input_dim));
  }
  MlpCache cache;
  cache.sparse_input = false;
  cache.x_dense = x;
  return mlp_forward_impl(state, cfg, std::move(cache), train, rng);
}

std::vector<Matrix> mlp_backward(const ModelState& state, const MlpConfig& cfg,
                                 const MlpCache& cache,
                                 const Eigen::Ref<const Matrix>& dlogits) {
  if (cache.step_stamp != state.step) {
    throw DataError("mlp_backward: cache is stale (optimizer stepped since "
                    "the forward pass)");
  }
  const std::size_t n_layers = cfg.hidden.size();
  std::vector<Matrix> grads(state.params.size());

  auto input_t_times = [&](const Matrix& rhs) -> Matrix {
    if (cache.sparse_input) return cache.x_sparse.transpose() * rhs;
    return cache.x_dense.transpose() * rhs;
  };

  // Head.
  const Matrix& w_out = state.params[2 * n_layers].value;
  grads[2 * n_layers] = (n_layers == 0)
                            ? input_t_times(dlogits)
                            : Matrix(cache.dropped.back().transpose() * dlogits);
  grads[2 * n_layers + 1] = dlogits.colwise().sum();

  Matrix dact = dlogits * w_out.transpose();
  for (std::size_t l = n_layers; l-- > 0;) {
    Matrix dh = cache.masks.empty() ? dact : Matrix(dact.cwiseProduct(cache.masks[l]));
    Matrix dpre =
        dh.cwiseProduct((cache.pre[l].array() > 0.0).cast<Scalar>().matrix());
    grads[2 * l] = (l == 0) ? input_t_times(dpre)
                            : Matrix(cache.dropped[l - 1].transpose() * dpre);
    grads[2 * l + 1] = dpre.colwise().sum();
    if (l > 0) {
      dact = dpre * state.params[2 * l].value.transpose();
    }
  }
  return grads;
}

// --- GCN ----------------------------------------------------------------------

void GcnConfig::validate() const {
  if (input_dim < 1) throw DataError("gcn: input_dim must be >= 1");
  if (hidden < 1) throw DataError("gcn: hidden width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw DataError("gcn: dropout must lie in [0, 1)");
  }
}

ModelState gcn_init(const GcnConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.init_seed);
  ModelState state;
  state.params.push_back(
      make_param("w1", init_weight(cfg.input_dim, cfg.hidden, rng), true));
  state.params.push_back(
      make_param("w2", init_weight(cfg.hidden, cfg.hidden, rng), true));
  state.params.push_back(make_param("w3", init_weight(cfg.hidden, 1, rng), true));
  state.params.push_back(make_param("b3", Matrix::Zero(1, 1), false));
  return state;
}

Matrix gcn_layer(const Eigen::Ref<const Matrix>& a_hat,
                 const Eigen::Ref<const Matrix>& h,
                 const Eigen::Ref<const Matrix>& w) {
  if (a_hat.rows() != a_hat.cols() || a_hat.cols() != h.rows() ||
      h.cols() != w.rows()) {
    throw DataError("gcn_layer: shape mismatch");
  }
  return relu(a_hat * h * w);
}

GcnForward gcn_forward(const ModelState& state, const GcnConfig& cfg,
                       const Eigen::Ref<const Matrix>& a_hat,
                       const Eigen::Ref<const Matrix>& x, bool train,
                       RngStream* rng) {
  cfg.validate();
  if (state.params.size() != 4) {
    throw DataError("gcn_forward: state does not match config");
  }
  if (a_hat.rows() != x.rows() || x.cols() != cfg.input_dim) {
    throw DataError("gcn_forward: shape mismatch");
  }
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (use_dropout && rng == nullptr) {
    throw DataError("gcn_forward: train-mode dropout needs an rng");
  }
  const Matrix& w1 = state.params[0].value;
  const Matrix& w2 = state.params[1].value;
  const Matrix& w3 = state.params[2].value;
  const Scalar b3 = state.params[3].value(0, 0);

  GcnForward out;
  GcnCache& c = out.cache;
  c.train = train;
  c.step_stamp = state.step;

  c.m1 = a_hat * x;
  c.pre1 = c.m1 * w1;
  Matrix h1 = relu(c.pre1);
  if (use_dropout) {
    c.mask1 = dropout_mask(h1.rows(), h1.cols(), cfg.dropout, *rng);
    h1 = h1.cwiseProduct(c.mask1);
  }
  c.m2 = a_hat * h1;
  c.pre2 = c.m2 * w2;
  Matrix h2 = relu(c.pre2);
  if (use_dropout) {
    c.mask2 = dropout_mask(h2.rows(), h2.cols(), cfg.dropout, *rng);
    h2 = h2.cwiseProduct(c.mask2);
  }
  c.h2d = std::move(h2);

  out.logits = ((c.h2d * w3).col(0).array() + b3).matrix();
  out.probs = out.logits.unaryExpr([](Scalar v) { return sigmoid(v); });
  return out;
}

std::vector<Matrix> gcn_backward(const ModelState& state, const GcnConfig& cfg,
                                 const Eigen::Ref<const Matrix>& a_hat,
                                 const GcnCache& cache,
                                 const Eigen::Ref<const Vector>& dlogits) {
  if (cache.step_stamp != state.step) {
    throw DataError("gcn_backward: cache is stale (optimizer stepped since "
                    "the forward pass)");
  }
  const Matrix& w2 = state.params[1].value;
  const Matrix& w3 = state.params[2].value;
  const bool use_dropout = cache.train && cfg.dropout > 0.0;

  std::vector<Matrix> grads(4);
  grads[2] = cache.h2d.transpose() * dlogits;           // dW3
  grads[3] = Matrix::Constant(1, 1, dlogits.sum());     // db3

  Matrix dh2d = dlogits * w3.transpose();
  if (use_dropout) dh2d = dh2d.cwiseProduct(cache.mask2);
  const Matrix dpre2 =
      dh2d.cwiseProduct((cache.pre2.array() > 0.0).cast<Scalar>().matrix());
  grads[1] = cache.m2.transpose() * dpre2;              // dW2

  Matrix dh1d = a_hat.transpose() * (dpre2 * w2.transpose());
  if (use_dropout) dh1d = dh1d.cwiseProduct(cache.mask1);
  const Matrix dpre1 =
      dh1d.cwiseProduct((cache.pre1.array() > 0.0).cast<Scalar>().matrix());
  grads[0] = cache.m1.transpose() * dpre1;              // dW1
  return grads;
}

// --- cluster training ---------------------------------------------------------

std::vector<std::vector<Index>> cluster_partition(Index n, int clusters,
                                                  RngStream& rng) {
  if (clusters < 1 || static_cast<Index>(clusters) > n) {
    throw DataError("cluster_partition: cluster count must lie in [1, n]");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(order);

  std::vector<std::vector<Index>> batches(static_cast<std::size_t>(clusters));
  const Index base = n / clusters;
  const Index extra = n % clusters;
  std::size_t pos = 0;
  for (int b = 0; b < clusters; ++b) {
    const Index size = base + (b < extra ? 1 : 0);
    auto& batch = batches[static_cast<std::size_t>(b)];
    batch.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                 order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(batch.begin(), batch.end());
    pos += static_cast<std::size_t>(size);
  }
  return batches;
}

namespace {

// Mean BCE over the listed rows; fills dlogits over all rows (zeros outside).
Scalar masked_bce(const Vector& probs, const std::vector<int>& labels,
                  const std::vector<Index>& rows, Vector* dlogits) {
  if (dlogits) dlogits->setZero(probs.size());
  Scalar total = 0.0;
  for (Index r : rows) {
    total += bce_loss(labels[static_cast<std::size_t>(r)], probs[r]);
    if (dlogits) {
      (*dlogits)[r] =
          bce_sigmoid_dlogit(labels[static_cast<std::size_t>(r)], probs[r]) /
          static_cast<Scalar>(rows.size());
    }
  }
  return total / static_cast<Scalar>(rows.size());
}

AdamConfig adam_from(const TrainConfig& tc) {
  AdamConfig cfg;
  cfg.lr = tc.lr;
  cfg.weight_decay = tc.weight_decay;
  return cfg;
}

}  // namespace

GcnStepResult cluster_gcn_step(ModelState& state, const GcnConfig& cfg,
                               const PopulationGraph& pg,
                               const std::vector<Index>& batch,
                               const std::vector<char>& is_train,
                               const TrainConfig& tc, RngStream& rng) {
  if (batch.empty()) throw DataError("cluster_gcn_step: empty batch");
  std::vector<Index> train_local;
  for (std::size_t a = 0; a < batch.size(); ++a) {
    if (is_train[static_cast<std::size_t>(batch[a])]) {
      train_local.push_back(static_cast<Index>(a));
    }
  }
  if (train_local.empty()) return {false, 0.0};  // nothing to learn from

  const Matrix a_hat = normalized_adjacency(pg.adj.induced(batch)).to_dense();
  Matrix x(batch.size(), pg.features.cols());
  std::vector<int> labels(batch.size());
  for (std::size_t a = 0; a < batch.size(); ++a) {
    x.row(static_cast<Index>(a)) = pg.features.row(batch[a]);
    labels[a] = pg.labels[static_cast<std::size_t>(batch[a])];
  }

  GcnForward fwd = gcn_forward(state, cfg, a_hat, x, /*train=*/true, &rng);
  Vector dlogits;
  const Scalar loss = masked_bce(fwd.probs, labels, train_local, &dlogits);
  const auto grads = gcn_backward(state, cfg, a_hat, fwd.cache, dlogits);
  adam_step(state, grads, adam_from(tc));
  return {true, loss};
}

GcnStepResult full_batch_gcn_step(ModelState& state, const GcnConfig& cfg,
                                  const Eigen::Ref<const Matrix>& a_hat_full,
                                  const PopulationGraph& pg,
                                  const std::vector<char>& is_train,
                                  const TrainConfig& tc, RngStream& rng) {
  std::vector<Index> train_rows;
  for (std::size_t i = 0; i < is_train.size(); ++i) {
    if (is_train[i]) train_rows.push_back(static_cast<Index>(i));
  }
  if (train_rows.empty()) return {false, 0.0};

  GcnForward fwd =
      gcn_forward(state, cfg, a_hat_full, pg.features, /*train=*/true, &rng);
  Vector dlogits;
  const Scalar loss = masked_bce(fwd.probs, pg.labels, train_rows, &dlogits);
  const auto grads = gcn_backward(state, cfg, a_hat_full, fwd.cache, dlogits);
  adam_step(state, grads, adam_from(tc));
  return {true, loss};
}

Vector gcn_predict(const ModelState& state, const GcnConfig& cfg,
                   const Eigen::Ref<const Matrix>& a_hat,
                   const Eigen::Ref<const Matrix>& x) {
  return gcn_forward(state, cfg, a_hat, x, /*train=*/false, nullptr).probs;
}

namespace {

Scalar accuracy_on(const Vector& probs, const std::vector<int>& labels,
                   const std::vector<Index>& idx) {
  if (idx.empty()) return 0.0;
  Index correct = 0;
  for (Index i : idx) {
    const int pred = probs[i] > 0.5 ? 1 : 0;
    if (pred == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<Scalar>(correct) / static_cast<Scalar>(idx.size());
}

}  // namespace

GcnTrainResult train_gcn(const GcnConfig& cfg, const PopulationGraph& pg,
                         const std::vector<Index>& train_idx,
                         const std::vector<Index>& val_idx,
                         const TrainConfig& tc, const Partitioner& partitioner) {
  if (train_idx.empty()) throw DataError("train_gcn: no training nodes");
  const Index n = pg.adj.node_count();
  if (pg.features.rows() != n ||
      static_cast<Index>(pg.labels.size()) != n) {
    throw DataError("train_gcn: population graph is incomplete");
  }

  std::vector<char> is_train(static_cast<std::size_t>(n), 0);
  for (Index i : train_idx) is_train[static_cast<std::size_t>(i)] = 1;

  RngStream rng = RngStream(tc.seed);
  RngStream partition_rng = rng.derive(0x70617274ULL);  // batch assignment

  std::vector<std::vector<Index>> batches;
  if (tc.clusters == 1) {
    // Single batch over all nodes; handled by the full-batch step below.
  } else if (partitioner) {
    batches = partitioner(pg, tc.clusters, partition_rng);
  } else {
    batches = cluster_partition(n, tc.clusters, partition_rng);
  }

  const Matrix a_hat_full = normalized_adjacency(pg.adj).to_dense();

  GcnTrainResult result;
  result.state = gcn_init(cfg);
  ModelState best = result.state;
  Scalar best_acc = -1.0;
  int best_epoch = -1;

  const bool track_val = tc.best_val_checkpoint && !val_idx.empty();
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Scalar epoch_loss = 0.0;
    int counted = 0;
    if (tc.clusters == 1) {
      const auto step = full_batch_gcn_step(result.state, cfg, a_hat_full, pg,
                                            is_train, tc, rng);
      if (step.updated) {
        epoch_loss += step.loss;
        ++counted;
      }
    } else {
      for (const auto& batch : batches) {
        const auto step =
            cluster_gcn_step(result.state, cfg, pg, batch, is_train, tc, rng);
        if (step.updated) {
          epoch_loss += step.loss;
          ++counted;
        }
      }
    }
    result.epoch_loss.push_back(counted > 0 ? epoch_loss / counted : 0.0);

    if (track_val) {
      const Vector probs =
          gcn_predict(result.state, cfg, a_hat_full, pg.features);
      const Scalar acc = accuracy_on(probs, pg.labels, val_idx);
      if (acc > best_acc) {
        best_acc = acc;
        best_epoch = epoch;
        best = result.state;
      }
    }
  }
  if (track_val) {
    result.state = std::move(best);
    result.best_epoch = best_epoch;
    result.best_val_accuracy = best_acc;
  }
  return result;
}

// --- MLP training --------------------------------------------------------------

namespace {

SpMatrix take_rows(const SpMatrix& x, const std::vector<Index>& rows) {
  SpMatrix out(static_cast<Index>(rows.size()), x.cols());
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (SpMatrix::InnerIterator it(x, rows[a]); it; ++it) {
      trips.emplace_back(static_cast<Index>(a), it.col(), it.value());
    }
  }
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

MlpTrainResult train_mlp(const MlpConfig& cfg, const SpMatrix& x,
                         const std::vector<int>& labels,
                         const std::vector<Index>& train_rows,
                         const std::vector<Index>& val_rows,
                         const TrainConfig& tc) {
  if (train_rows.empty()) throw DataError("train_mlp: no training rows");
  const SpMatrix x_train = take_rows(x, train_rows);
  const SpMatrix x_val = take_rows(x, val_rows);
  std::vector<int> y_train;
  y_train.reserve(train_rows.size());
  for (Index r : train_rows) y_train.push_back(labels[static_cast<std::size_t>(r)]);
  std::vector<int> y_val;
  for (Index r : val_rows) y_val.push_back(labels[static_cast<std::size_t>(r)]);

  MlpTrainResult result;
  result.state = mlp_init(cfg);
  ModelState best = result.state;
  Scalar best_acc = -1.0;
  int best_epoch = -1;
  RngStream rng(tc.seed);
  const AdamConfig adam = adam_from(tc);
  const bool track_val = tc.best_val_checkpoint && !val_rows.empty();

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    MlpForward fwd = mlp_forward(result.state, cfg, x_train, /*train=*/true, &rng);
    Matrix dlogits;
    const Scalar loss = softmax_cross_entropy(fwd.logits, y_train, &dlogits);
    if (!std::isfinite(loss)) {
      throw NumericError("train_mlp: non-finite loss at epoch " +
                         std::to_string(epoch));
    }
    const auto grads = mlp_backward(result.state, cfg, fwd.cache, dlogits);
    adam_step(result.state, grads, adam);
    result.epoch_loss.push_back(loss);

    if (track_val) {
      MlpForward ev = mlp_forward(result.state, cfg, x_val, /*train=*/false, nullptr);
      const Vector probs = softmax_prob1(ev.logits);
      Index correct = 0;
      for (Index i = 0; i < probs.size(); ++i) {
        if ((probs[i] > 0.5 ? 1 : 0) == y_val[static_cast<std::size_t>(i)]) {
          ++correct;
        }
      }
      const Scalar acc =
          static_cast<Scalar>(correct) / static_cast<Scalar>(val_rows.size());
      if (acc > best_acc) {
        best_acc = acc;
        best_epoch = epoch;
        best = result.state;
      }
    }
  }
  if (track_val) {
    result.state = std::move(best);
    result.best_epoch = best_epoch;
    result.best_val_accuracy = best_acc;
  }
  return result;
}

MlpEval mlp_predict(const ModelState& state, const MlpConfig& cfg,
                    const SpMatrix& x) {
  MlpForward fwd = mlp_forward(state, cfg, x, /*train=*/false, nullptr);
  return {softmax_prob1(fwd.logits), std::move(fwd.embedding)};
}

// --- checkpoint container ------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[8] = {'N', 'P', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      io::write_f64(out, m(i, j));
    }
  }
}

Matrix read_matrix(std::istream& in, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = io::read_f64(in);
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const ModelState& state, const std::string& kind,
                     const std::string& config_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  io::write_u32(out, kCheckpointVersion);
  io::write_string(out, kind);
  io::write_string(out, config_json);
  io::write_u64(out, state.params.size());
  for (const auto& p : state.params) {
    io::write_string(out, p.name);
    out.put(p.decay ? 1 : 0);
    io::write_u64(out, static_cast<std::uint64_t>(p.value.rows()));
    io::write_u64(out, static_cast<std::uint64_t>(p.value.cols()));
    write_matrix(out, p.value);
    write_matrix(out, p.m);
    write_matrix(out, p.v);
  }
  io::write_u64(out, static_cast<std::uint64_t>(state.step));
  if (!out) throw DataError("write failed: " + path.string());

  nlohmann::ordered_json meta;
  meta["schema_version"] = 1;
  meta["kind"] = kind;
  meta["config"] = nlohmann::json::parse(config_json);
  meta["step"] = state.step;
  auto& tensors = meta["tensors"] = nlohmann::ordered_json::array();
  for (const auto& p : state.params) {
    tensors.push_back({{"name", p.name},
                       {"rows", p.value.rows()},
                       {"cols", p.value.cols()},
                       {"decay", p.decay}});
  }
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw DataError("cannot write sidecar for: " + path.string());
  side << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  if (io::read_u32(in) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version: " + path.string());
  }
  Checkpoint ckpt;
  ckpt.kind = io::read_string(in);
  ckpt.config_json = io::read_string(in);
  const std::uint64_t count = io::read_u64(in);
  ckpt.state.params.resize(count);
  for (auto& p : ckpt.state.params) {
    p.name = io::read_string(in);
    p.decay = in.get() != 0;
    const auto rows = static_cast<Index>(io::read_u64(in));
    const auto cols = static_cast<Index>(io::read_u64(in));
    p.value = read_matrix(in, rows, cols);
    p.m = read_matrix(in, rows, cols);
    p.v = read_matrix(in, rows, cols);
  }
  ckpt.state.step = static_cast<std::int64_t>(io::read_u64(in));
  if (!in) throw DataError("truncated checkpoint: " + path.string());
  return ckpt;
}

}  // namespace neuropool::nn
