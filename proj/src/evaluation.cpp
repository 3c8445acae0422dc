// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "neuropool/io.hpp"
#include "neuropool/rng.hpp"

namespace neuropool {

// --- cross-validation ----------------------------------------------------------

void FoldPlan::validate() const {
  if (outer_k < 2) throw DataError("fold plan: outer_k must be >= 2");
  if (inner_k < 2) throw DataError("fold plan: inner_k must be >= 2");
  if (outer_repeats < 1 || inner_repeats < 1) {
    throw DataError("fold plan: repeats must be >= 1");
  }
}

std::vector<std::vector<Index>> kfold_split(Index n, int k, std::uint64_t seed) {
  if (k < 1 || static_cast<Index>(k) > n) {
    throw DataError("kfold_split: k must lie in [1, n]");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream rng(seed);
  rng.shuffle(order);

  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  const Index base = n / k;
  const Index extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(fold.begin(), fold.end());
    pos += static_cast<std::size_t>(size);
  }
  return folds;
}

// --- metrics ----------------------------------------------------------------------

Scalar roc_auc(const Eigen::Ref<const Vector>& scores,
               const std::vector<int>& labels) {
  const Index n = scores.size();
  if (static_cast<Index>(labels.size()) != n) {
    throw DataError("roc_auc: score and label counts differ");
  }
  long n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("roc_auc: both classes must be present");
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return scores[a] < scores[b]; });

  // Average ranks over runs of equal scores; ties then contribute 1/2 pair.
  Scalar pos_rank_sum = 0.0;
  std::size_t lo = 0;
  while (lo < order.size()) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() &&
           scores[order[hi + 1]] == scores[order[lo]]) {
      ++hi;
    }
    const Scalar avg_rank = static_cast<Scalar>(lo + hi + 2) / 2.0;  // 1-based
    for (std::size_t i = lo; i <= hi; ++i) {
      if (labels[static_cast<std::size_t>(order[i])] == 1) {
        pos_rank_sum += avg_rank;
      }
    }
    lo = hi + 1;
  }
  const Scalar u = pos_rank_sum -
                   static_cast<Scalar>(n_pos) * static_cast<Scalar>(n_pos + 1) / 2.0;
  return u / (static_cast<Scalar>(n_pos) * static_cast<Scalar>(n_neg));
}

Scalar ConfusionCounts::accuracy_pct() const {
  return 100.0 * static_cast<Scalar>(tp + tn) / static_cast<Scalar>(total());
}

std::optional<Scalar> ConfusionCounts::sensitivity_pct() const {
  if (tp + fn == 0) return std::nullopt;
  return 100.0 * static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fn);
}

std::optional<Scalar> ConfusionCounts::specificity_pct() const {
  if (tn + fp == 0) return std::nullopt;
  return 100.0 * static_cast<Scalar>(tn) / static_cast<Scalar>(tn + fp);
}

ConfusionCounts confusion_at_half(const Eigen::Ref<const Vector>& probs,
                                  const std::vector<int>& labels) {
  if (static_cast<std::size_t>(probs.size()) != labels.size()) {
    throw DataError("confusion: probability and label counts differ");
  }
  ConfusionCounts c;
  for (Index i = 0; i < probs.size(); ++i) {
    const int pred = probs[i] > 0.5 ? 1 : 0;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y == 1) {
      (pred == 1 ? c.tp : c.fn) += 1;
    } else {
      (pred == 0 ? c.tn : c.fp) += 1;
    }
  }
  return c;
}

namespace {

struct Welford {
  // Two-pass would be just as fine; what matters is a fixed summation order.
  std::vector<Scalar> values;
  void add(Scalar v) { values.push_back(v); }
  Scalar mean() const {
    if (values.empty()) return 0.0;
    Scalar s = 0.0;
    for (Scalar v : values) s += v;
    return s / static_cast<Scalar>(values.size());
  }
  Scalar sample_sd() const {
    if (values.size() < 2) return 0.0;
    const Scalar m = mean();
    Scalar s = 0.0;
    for (Scalar v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<Scalar>(values.size() - 1));
  }
};

AggregateStat aggregate(const std::vector<FoldMetrics>& per_fold,
                        const std::function<std::optional<Scalar>(
                            const FoldMetrics&)>& pick) {
  Welford all;
  std::map<int, Welford> by_repeat;
  for (const auto& fm : per_fold) {
    if (auto v = pick(fm)) {
      all.add(*v);
      by_repeat[fm.repeat].add(*v);
    }
  }
  Welford repeat_means;
  for (const auto& [rep, w] : by_repeat) {
    if (!w.values.empty()) repeat_means.add(w.mean());
  }
  AggregateStat stat;
  stat.mean = all.mean();
  stat.sd_over_folds = all.sample_sd();
  stat.sd_over_repeats = repeat_means.sample_sd();
  stat.count = static_cast<long>(all.values.size());
  return stat;
}

}  // namespace

void finalize_report(MetricsReport& report) {
  report.accuracy = aggregate(
      report.per_fold, [](const FoldMetrics& f) { return std::optional(f.accuracy); });
  report.sensitivity =
      aggregate(report.per_fold, [](const FoldMetrics& f) { return f.sensitivity; });
  report.specificity =
      aggregate(report.per_fold, [](const FoldMetrics& f) { return f.specificity; });
  report.auc =
      aggregate(report.per_fold, [](const FoldMetrics& f) { return f.auc; });
}

// --- pooling exports ----------------------------------------------------------------

PooledSubject pool_subject(const SubjectGraph& g, const PoolingConfig& cfg) {
  PooledSubject out;
  out.subject_id = g.subject_id;
  out.n_nodes = g.feats.rows();
  out.feat_dim = g.feats.cols();
  out.ratio = cfg.ratio;
  PoolingResult res = pool_graph(g.adj, g.feats, cfg);
  out.vec = sparse_flatten(res, out.n_nodes, out.feat_dim);
  out.selected = res.selected;
  for (const auto& [key, w] : res.pooled_adj.entries()) {
    out.edges.emplace_back(res.selected[static_cast<std::size_t>(key.first)],
                           res.selected[static_cast<std::size_t>(key.second)], w);
  }
  return out;
}

std::vector<PooledSubject> pool_subjects(const std::vector<SubjectGraph>& subjects,
                                         const PoolingConfig& cfg, int jobs) {
  std::vector<PooledSubject> results(subjects.size());
  const int workers = std::max(
      1, std::min<int>(jobs, static_cast<int>(subjects.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      results[i] = pool_subject(subjects[i], cfg);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= subjects.size()) break;
          results[i] = pool_subject(subjects[i], cfg);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

SelectionFrequencyTable selection_frequencies(
    const std::vector<PooledSubject>& results,
    const std::vector<std::size_t>& group_members, const std::string& group,
    int top_m) {
  if (group_members.empty()) {
    throw DataError("selection_frequencies: empty group '" + group + "'");
  }
  std::map<Index, long> node_counts;
  std::map<std::pair<Index, Index>, long> edge_counts;
  for (std::size_t m : group_members) {
    if (m >= results.size()) {
      throw DataError("selection_frequencies: member index out of range");
    }
    const auto& sub = results[m];
    for (Index node : sub.selected) node_counts[node] += 1;
    std::set<std::pair<Index, Index>> pairs;  // unordered, once per subject
    for (const auto& [a, b, w] : sub.edges) {
      if (w > 0.0) pairs.insert({std::min(a, b), std::max(a, b)});
    }
    for (const auto& p : pairs) edge_counts[p] += 1;
  }

  SelectionFrequencyTable table;
  table.group = group;
  table.group_size = group_members.size();
  table.top_m = top_m;
  const auto denom = static_cast<Scalar>(group_members.size());

  std::vector<SelectionFrequencyTable::NodeFreq> nodes;
  for (const auto& [node, count] : node_counts) {
    nodes.push_back({node, count, static_cast<Scalar>(count) / denom});
  }
  std::sort(nodes.begin(), nodes.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.node < b.node;
  });
  if (static_cast<int>(nodes.size()) > top_m) nodes.resize(top_m);
  table.nodes = std::move(nodes);

  std::vector<SelectionFrequencyTable::EdgeFreq> edges;
  for (const auto& [pair, count] : edge_counts) {
    edges.push_back(
        {pair.first, pair.second, count, static_cast<Scalar>(count) / denom});
  }
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return std::pair(a.a, a.b) < std::pair(b.a, b.b);
  });
  if (static_cast<int>(edges.size()) > top_m) edges.resize(top_m);
  table.edges = std::move(edges);
  return table;
}

void write_node_frequency_csv(const std::filesystem::path& path,
                              const SelectionFrequencyTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "# schema=freq-csv.v1 group=" << table.group
      << " size=" << table.group_size << " top=" << table.top_m << "\n";
  out << "node,count,frequency\n";
  for (const auto& n : table.nodes) {
    out << n.node << ',' << n.count << ',' << io::format_f64(n.frequency)
        << "\n";
  }
}

void write_edge_frequency_csv(const std::filesystem::path& path,
                              const SelectionFrequencyTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "# schema=freq-edges-csv.v1 group=" << table.group
      << " size=" << table.group_size << " top=" << table.top_m << "\n";
  out << "src,dst,count,frequency\n";
  for (const auto& e : table.edges) {
    out << e.a << ',' << e.b << ',' << e.count << ','
        << io::format_f64(e.frequency) << "\n";
  }
}

void write_pooling_summary_csv(const std::filesystem::path& path,
                               const std::vector<PooledSubject>& results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "subject_id,n_nodes,feat_dim,ratio,selected\n";
  for (const auto& sub : results) {
    out << sub.subject_id << ',' << sub.n_nodes << ',' << sub.feat_dim << ','
        << io::format_f64(sub.ratio) << ',';
    for (std::size_t i = 0; i < sub.selected.size(); ++i) {
      if (i > 0) out << ' ';
      out << sub.selected[i];
    }
    out << "\n";
  }
}

void write_pooling_edges_csv(const std::filesystem::path& path,
                             const std::vector<PooledSubject>& results) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "subject_id,src,dst,weight\n";
  for (const auto& sub : results) {
    for (const auto& [a, b, w] : sub.edges) {
      out << sub.subject_id << ',' << a << ',' << b << ','
          << io::format_f64(w) << "\n";
    }
  }
}

std::vector<PooledSubject> read_pooling_summary_csv(
    const std::filesystem::path& summary_path,
    const std::filesystem::path& edges_path) {
  std::ifstream in(summary_path);
  if (!in) throw DataError("cannot open: " + summary_path.string());
  std::string line;
  if (!std::getline(in, line) ||
      io::split_csv_line(line) !=
          std::vector<std::string>{"subject_id", "n_nodes", "feat_dim", "ratio",
                                   "selected"}) {
    throw DataError(summary_path.string() + ": unexpected header");
  }
  std::vector<PooledSubject> results;
  std::map<std::string, std::size_t> by_id;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != 5) {
      throw DataError(summary_path.string() + ": malformed row '" + line + "'");
    }
    PooledSubject sub;
    sub.subject_id = fields[0];
    sub.n_nodes = std::stol(fields[1]);
    sub.feat_dim = std::stol(fields[2]);
    sub.ratio = std::stod(fields[3]);
    std::istringstream sel(fields[4]);
    Index idx = 0;
    while (sel >> idx) sub.selected.push_back(idx);
    by_id[sub.subject_id] = results.size();
    results.push_back(std::move(sub));
  }

  if (!edges_path.empty()) {
    std::ifstream ein(edges_path);
    if (!ein) throw DataError("cannot open: " + edges_path.string());
    std::getline(ein, line);  // header
    while (std::getline(ein, line)) {
      if (line.empty()) continue;
      const auto fields = io::split_csv_line(line);
      if (fields.size() != 4) {
        throw DataError(edges_path.string() + ": malformed row '" + line + "'");
      }
      auto it = by_id.find(fields[0]);
      if (it == by_id.end()) {
        throw DataError(edges_path.string() + ": unknown subject '" +
                        fields[0] + "'");
      }
      results[it->second].edges.emplace_back(
          std::stol(fields[1]), std::stol(fields[2]), std::stod(fields[3]));
    }
  }
  return results;
}

// --- pipeline -------------------------------------------------------------------------

PipelineData make_pipeline_data(const std::vector<PooledSubject>& pooled,
                                const std::vector<PhenotypeRecord>& phenotypes) {
  if (pooled.empty()) throw DataError("pipeline: no pooled subjects");
  std::map<std::string, const PhenotypeRecord*> by_id;
  for (const auto& rec : phenotypes) by_id[rec.subject_id] = &rec;

  PipelineData data;
  data.n_nodes = pooled.front().n_nodes;
  data.feat_dim = pooled.front().feat_dim;
  for (const auto& sub : pooled) {
    if (sub.n_nodes != data.n_nodes || sub.feat_dim != data.feat_dim) {
      throw DataError("pipeline: subject " + sub.subject_id +
                      " has a different feature layout");
    }
    auto it = by_id.find(sub.subject_id);
    if (it == by_id.end()) {
      throw DataError("pipeline: subject " + sub.subject_id +
                      " has no phenotype row");
    }
    if (!it->second->dx_group) {
      throw DataError("pipeline: subject " + sub.subject_id +
                      " has no diagnosis label");
    }
    data.ids.push_back(sub.subject_id);
    data.pooled.push_back(sub.vec);
    data.labels.push_back(*it->second->dx_group);
    data.phenotypes.push_back(*it->second);
  }
  return data;
}

SpMatrix stack_sparse_rows(const PipelineData& data) {
  const auto dim = static_cast<std::uint64_t>(data.n_nodes) *
                   static_cast<std::uint64_t>(data.feat_dim);
  SpMatrix x(data.n_subjects(), static_cast<Index>(dim));
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (Index i = 0; i < data.n_subjects(); ++i) {
    const auto& vec = data.pooled[static_cast<std::size_t>(i)];
    if (vec.total_len != dim) {
      throw DataError("pipeline: sparse vector length mismatch for subject " +
                      data.ids[static_cast<std::size_t>(i)]);
    }
    for (const auto& [pos, val] : vec.entries) {
      trips.emplace_back(i, static_cast<Index>(pos), val);
    }
  }
  x.setFromTriplets(trips.begin(), trips.end());
  return x;
}

namespace {

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0, std::uint64_t d = 0) {
  return RngStream(base).derive(a).derive(b).derive(c).derive(d).seed();
}

// Salts for the independent random streams of one run.
enum SeedRole : std::uint64_t {
  kOuterSplit = 1,
  kInnerSplit,
  kMlpInit,
  kMlpTrain,
  kLrInit,
  kLrTrain,
  kGcnInit,
  kGcnTrain,
  kGcnValCarve,
};

std::vector<Index> complement_of(const std::vector<Index>& fold, Index n) {
  std::vector<char> in_fold(static_cast<std::size_t>(n), 0);
  for (Index i : fold) in_fold[static_cast<std::size_t>(i)] = 1;
  std::vector<Index> rest;
  rest.reserve(static_cast<std::size_t>(n) - fold.size());
  for (Index i = 0; i < n; ++i) {
    if (!in_fold[static_cast<std::size_t>(i)]) rest.push_back(i);
  }
  return rest;
}

bool has_both_classes(const std::vector<int>& labels,
                      const std::vector<Index>& idx) {
  bool pos = false, neg = false;
  for (Index i : idx) {
    (labels[static_cast<std::size_t>(i)] == 1 ? pos : neg) = true;
    if (pos && neg) return true;
  }
  return false;
}

FoldMetrics fold_metrics(int repeat, int fold, const Vector& probs_all,
                         const std::vector<int>& labels,
                         const std::vector<Index>& test) {
  Vector probs(static_cast<Index>(test.size()));
  std::vector<int> y(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    probs[static_cast<Index>(i)] = probs_all[test[i]];
    y[i] = labels[static_cast<std::size_t>(test[i])];
  }
  FoldMetrics fm;
  fm.repeat = repeat;
  fm.fold = fold;
  fm.confusion = confusion_at_half(probs, y);
  fm.accuracy = fm.confusion.accuracy_pct();
  fm.sensitivity = fm.confusion.sensitivity_pct();
  fm.specificity = fm.confusion.specificity_pct();
  if (has_both_classes(labels, test)) {
    fm.auc = roc_auc(probs, y);
  }
  return fm;
}

nn::MlpConfig lr_head_config(Index embedding_dim, std::uint64_t init_seed) {
  nn::MlpConfig cfg;
  cfg.input_dim = embedding_dim;
  cfg.hidden = {};  // plain logistic head: affine + softmax over 2 classes
  cfg.n_classes = 2;
  cfg.dropout = 0.0;
  cfg.init_seed = init_seed;
  return cfg;
}

// Inner-CV model selection: trains one extractor per inner fold/repeat and
// keeps the one with the best validation accuracy (earliest on ties).
nn::ModelState select_mlp(const PipelineConfig& cfg, const nn::MlpConfig& mlp_cfg,
                          const SpMatrix& x, const std::vector<int>& labels,
                          const std::vector<Index>& outer_train, int repeat,
                          int fold) {
  const FoldPlan& plan = cfg.folds;
  nn::ModelState best;
  Scalar best_acc = -1.0;
  bool found = false;
  for (int ir = 0; ir < plan.inner_repeats; ++ir) {
    const auto inner_folds =
        kfold_split(static_cast<Index>(outer_train.size()), plan.inner_k,
                    mix_seed(plan.seed, kInnerSplit, repeat, fold, ir));
    for (int fi = 0; fi < plan.inner_k; ++fi) {
      std::vector<Index> val_abs;
      for (Index local : inner_folds[static_cast<std::size_t>(fi)]) {
        val_abs.push_back(outer_train[static_cast<std::size_t>(local)]);
      }
      std::vector<Index> train_abs;
      std::vector<char> in_val(outer_train.size(), 0);
      for (Index local : inner_folds[static_cast<std::size_t>(fi)]) {
        in_val[static_cast<std::size_t>(local)] = 1;
      }
      for (std::size_t i = 0; i < outer_train.size(); ++i) {
        if (!in_val[i]) train_abs.push_back(outer_train[i]);
      }
      if (!has_both_classes(labels, train_abs)) {
        throw DataError("inner fold train split has a single class; rerun "
                        "with a different fold seed");
      }
      const std::uint64_t tag =
          static_cast<std::uint64_t>(ir) * 1000 + static_cast<std::uint64_t>(fi);
      nn::MlpConfig candidate_cfg = mlp_cfg;
      candidate_cfg.init_seed = mix_seed(plan.seed, kMlpInit, repeat, fold, tag);
      nn::TrainConfig tc = cfg.mlp_train;
      tc.seed = mix_seed(plan.seed, kMlpTrain, repeat, fold, tag);
      auto res = nn::train_mlp(candidate_cfg, x, labels, train_abs, val_abs, tc);
      if (res.best_val_accuracy > best_acc) {
        best_acc = res.best_val_accuracy;
        best = std::move(res.state);
        found = true;
      }
    }
  }
  if (!found) throw DataError("inner cross-validation selected no model");
  return best;
}

}  // namespace

PipelineResult run_pipeline(const PipelineData& data, const PipelineConfig& cfg,
                            const FoldSink& sink) {
  cfg.folds.validate();
  const Index n = data.n_subjects();
  if (n < cfg.folds.outer_k) {
    throw DataError("pipeline: fewer subjects than outer folds");
  }
  const SpMatrix x = stack_sparse_rows(data);
  nn::MlpConfig mlp_cfg = cfg.mlp;
  mlp_cfg.input_dim = x.cols();

  PopulationGraph pg_base;
  Matrix a_hat_full;
  if (cfg.run_gcn) {
    pg_base = build_population_graph(data.phenotypes, cfg.population_threshold);
    pg_base.labels = data.labels;
    a_hat_full = normalized_adjacency(pg_base.adj).to_dense();
  }

  PipelineResult result;
  result.mlp.stage = "mlp";
  result.lr.stage = "lr";
  result.gcn.stage = "gcn";

  for (int repeat = 0; repeat < cfg.folds.outer_repeats; ++repeat) {
    const auto folds =
        kfold_split(n, cfg.folds.outer_k,
                    mix_seed(cfg.folds.seed, kOuterSplit, repeat));
    for (int fold = 0; fold < cfg.folds.outer_k; ++fold) {
      const auto& test = folds[static_cast<std::size_t>(fold)];
      const auto train = complement_of(test, n);
      if (!has_both_classes(data.labels, train)) {
        throw DataError("outer fold train split has a single class; rerun "
                        "with a different fold seed");
      }

      const nn::ModelState mlp_state =
          select_mlp(cfg, mlp_cfg, x, data.labels, train, repeat, fold);
      const nn::MlpEval eval = nn::mlp_predict(mlp_state, mlp_cfg, x);
      result.mlp.per_fold.push_back(
          fold_metrics(repeat, fold, eval.probs, data.labels, test));

      nn::ModelState lr_state;
      if (cfg.run_lr) {
        const SpMatrix embeddings = eval.embedding.sparseView();
        const auto lr_cfg =
            lr_head_config(eval.embedding.cols(),
                           mix_seed(cfg.folds.seed, kLrInit, repeat, fold));
        nn::TrainConfig tc = cfg.lr_train;
        tc.seed = mix_seed(cfg.folds.seed, kLrTrain, repeat, fold);
        auto res = nn::train_mlp(lr_cfg, embeddings, data.labels, train, {}, tc);
        lr_state = std::move(res.state);
        const Vector probs =
            nn::mlp_predict(lr_state, lr_cfg, embeddings).probs;
        result.lr.per_fold.push_back(
            fold_metrics(repeat, fold, probs, data.labels, test));
      }

      nn::ModelState gcn_state;
      if (cfg.run_gcn) {
        PopulationGraph pg = pg_base;
        pg.features = eval.embedding;
        pg.train_idx = train;
        pg.test_idx = test;

        // Carve a validation slice out of the train split for checkpointing.
        std::vector<Index> gcn_train = train;
        std::vector<Index> gcn_val;
        if (cfg.gcn_train.best_val_checkpoint && cfg.gcn_val_fraction > 0.0) {
          std::vector<Index> shuffled = train;
          RngStream carve(mix_seed(cfg.folds.seed, kGcnValCarve, repeat, fold));
          carve.shuffle(shuffled);
          const auto n_val = static_cast<std::size_t>(
              cfg.gcn_val_fraction * static_cast<Scalar>(shuffled.size()));
          if (n_val >= 1 && n_val < shuffled.size()) {
            gcn_val.assign(shuffled.begin(),
                           shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
            gcn_train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val),
                             shuffled.end());
            std::sort(gcn_val.begin(), gcn_val.end());
            std::sort(gcn_train.begin(), gcn_train.end());
            if (!has_both_classes(data.labels, gcn_train)) {
              gcn_train = train;  // fall back to the full split
              gcn_val.clear();
            }
          }
        }

        nn::GcnConfig gcn_cfg = cfg.gcn;
        gcn_cfg.input_dim = eval.embedding.cols();
        gcn_cfg.init_seed = mix_seed(cfg.folds.seed, kGcnInit, repeat, fold);
        nn::TrainConfig tc = cfg.gcn_train;
        tc.seed = mix_seed(cfg.folds.seed, kGcnTrain, repeat, fold);
        auto res = nn::train_gcn(gcn_cfg, pg, gcn_train, gcn_val, tc);
        gcn_state = std::move(res.state);
        const Vector probs =
            nn::gcn_predict(gcn_state, gcn_cfg, a_hat_full, pg.features);
        result.gcn.per_fold.push_back(
            fold_metrics(repeat, fold, probs, data.labels, test));
      }

      if (sink) {
        FoldArtifacts artifacts{repeat, fold, mlp_state,
                                cfg.run_lr ? &lr_state : nullptr,
                                cfg.run_gcn ? &gcn_state : nullptr};
        sink(artifacts);
      }
    }
  }
  finalize_report(result.mlp);
  finalize_report(result.lr);
  finalize_report(result.gcn);
  return result;
}

PipelineResult evaluate_pipeline(const PipelineData& data,
                                 const PipelineConfig& cfg,
                                 const StateLoader& loader) {
  cfg.folds.validate();
  const Index n = data.n_subjects();
  const SpMatrix x = stack_sparse_rows(data);
  nn::MlpConfig mlp_cfg = cfg.mlp;
  mlp_cfg.input_dim = x.cols();

  PopulationGraph pg_base;
  Matrix a_hat_full;
  if (cfg.run_gcn) {
    pg_base = build_population_graph(data.phenotypes, cfg.population_threshold);
    pg_base.labels = data.labels;
    a_hat_full = normalized_adjacency(pg_base.adj).to_dense();
  }

  PipelineResult result;
  result.mlp.stage = "mlp";
  result.lr.stage = "lr";
  result.gcn.stage = "gcn";

  for (int repeat = 0; repeat < cfg.folds.outer_repeats; ++repeat) {
    const auto folds =
        kfold_split(n, cfg.folds.outer_k,
                    mix_seed(cfg.folds.seed, kOuterSplit, repeat));
    for (int fold = 0; fold < cfg.folds.outer_k; ++fold) {
      const auto& test = folds[static_cast<std::size_t>(fold)];
      const nn::ModelState mlp_state = loader(repeat, fold, "mlp");
      const nn::MlpEval eval = nn::mlp_predict(mlp_state, mlp_cfg, x);
      result.mlp.per_fold.push_back(
          fold_metrics(repeat, fold, eval.probs, data.labels, test));

      if (cfg.run_lr) {
        const SpMatrix embeddings = eval.embedding.sparseView();
        const auto lr_cfg = lr_head_config(eval.embedding.cols(), 0);
        const nn::ModelState lr_state = loader(repeat, fold, "lr");
        const Vector probs = nn::mlp_predict(lr_state, lr_cfg, embeddings).probs;
        result.lr.per_fold.push_back(
            fold_metrics(repeat, fold, probs, data.labels, test));
      }
      if (cfg.run_gcn) {
        nn::GcnConfig gcn_cfg = cfg.gcn;
        gcn_cfg.input_dim = eval.embedding.cols();
        const nn::ModelState gcn_state = loader(repeat, fold, "gcn");
        const Vector probs =
            nn::gcn_predict(gcn_state, gcn_cfg, a_hat_full, eval.embedding);
        result.gcn.per_fold.push_back(
            fold_metrics(repeat, fold, probs, data.labels, test));
      }
    }
  }
  finalize_report(result.mlp);
  finalize_report(result.lr);
  finalize_report(result.gcn);
  return result;
}

// --- report serialization --------------------------------------------------------------

namespace {

nlohmann::ordered_json train_config_json(const nn::TrainConfig& tc) {
  return {{"lr", tc.lr},
          {"weight_decay", tc.weight_decay},
          {"epochs", tc.epochs},
          {"clusters", tc.clusters},
          {"best_val_checkpoint", tc.best_val_checkpoint},
          {"seed", tc.seed}};
}

nlohmann::ordered_json stat_json(const AggregateStat& s) {
  return {{"mean", s.mean},
          {"sd_over_folds", s.sd_over_folds},
          {"sd_over_repeats", s.sd_over_repeats},
          {"count", s.count}};
}

nlohmann::ordered_json report_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["stage"] = rep.stage;
  auto& per_fold = j["per_fold"] = nlohmann::ordered_json::array();
  for (const auto& fm : rep.per_fold) {
    nlohmann::ordered_json f;
    f["repeat"] = fm.repeat;
    f["fold"] = fm.fold;
    f["tp"] = fm.confusion.tp;
    f["tn"] = fm.confusion.tn;
    f["fp"] = fm.confusion.fp;
    f["fn"] = fm.confusion.fn;
    f["accuracy"] = fm.accuracy;
    auto opt_field = [](const std::optional<Scalar>& v) {
      return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    };
    f["sensitivity"] = opt_field(fm.sensitivity);
    f["specificity"] = opt_field(fm.specificity);
    f["auc"] = opt_field(fm.auc);
    per_fold.push_back(std::move(f));
  }
  j["aggregate"] = {{"accuracy", stat_json(rep.accuracy)},
                    {"sensitivity", stat_json(rep.sensitivity)},
                    {"specificity", stat_json(rep.specificity)},
                    {"auc", stat_json(rep.auc)}};
  return j;
}

}  // namespace

std::string metrics_report_json(const PipelineConfig& cfg,
                                const std::vector<const MetricsReport*>& stages) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  auto& c = doc["config"];
  c["population_threshold"] = cfg.population_threshold;
  c["mlp"] = {{"hidden", cfg.mlp.hidden},
              {"n_classes", cfg.mlp.n_classes},
              {"dropout", cfg.mlp.dropout}};
  c["mlp_train"] = train_config_json(cfg.mlp_train);
  c["gcn"] = {{"hidden", cfg.gcn.hidden}, {"dropout", cfg.gcn.dropout}};
  c["gcn_train"] = train_config_json(cfg.gcn_train);
  c["gcn_val_fraction"] = cfg.gcn_val_fraction;
  c["lr_train"] = train_config_json(cfg.lr_train);
  c["folds"] = {{"outer_k", cfg.folds.outer_k},
                {"outer_repeats", cfg.folds.outer_repeats},
                {"inner_k", cfg.folds.inner_k},
                {"inner_repeats", cfg.folds.inner_repeats},
                {"seed", cfg.folds.seed}};
  c["run_lr"] = cfg.run_lr;
  c["run_gcn"] = cfg.run_gcn;
  auto& st = doc["stages"] = nlohmann::ordered_json::array();
  for (const auto* rep : stages) {
    st.push_back(report_json(*rep));
  }
  return doc.dump(2) + "\n";
}

void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<const MetricsReport*>& stages) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "stage,repeat,fold,tp,tn,fp,fn\n";
  for (const auto* rep : stages) {
    for (const auto& fm : rep->per_fold) {
      out << rep->stage << ',' << fm.repeat << ',' << fm.fold << ','
          << fm.confusion.tp << ',' << fm.confusion.tn << ',' << fm.confusion.fp
          << ',' << fm.confusion.fn << "\n";
    }
  }
}

void write_roc_points_csv(const std::filesystem::path& path,
                          const std::vector<RocInput>& inputs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "stage,repeat,fold,threshold,fpr,tpr\n";
  for (const auto& input : inputs) {
    long n_pos = 0;
    for (int y : input.labels) n_pos += (y == 1);
    const long n_neg = static_cast<long>(input.labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) continue;

    std::vector<Scalar> thresholds(input.scores.data(),
                                   input.scores.data() + input.scores.size());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                     thresholds.end());

    out << input.stage << ',' << input.repeat << ',' << input.fold
        << ",inf,0,0\n";
    for (const Scalar t : thresholds) {
      long tp = 0, fp = 0;
      for (Index i = 0; i < input.scores.size(); ++i) {
        if (input.scores[i] >= t) {
          (input.labels[static_cast<std::size_t>(i)] == 1 ? tp : fp) += 1;
        }
      }
      out << input.stage << ',' << input.repeat << ',' << input.fold << ','
          << io::format_f64(t) << ','
          << io::format_f64(static_cast<Scalar>(fp) / static_cast<Scalar>(n_neg))
          << ','
          << io::format_f64(static_cast<Scalar>(tp) / static_cast<Scalar>(n_pos))
          << "\n";
    }
  }
}

}  // namespace neuropool
