// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "neuropool/ingest.hpp"
#include "neuropool/nn.hpp"
#include "neuropool/pooling.hpp"
#include "neuropool/population.hpp"
#include "neuropool/types.hpp"

namespace neuropool {

// --- cross-validation ----------------------------------------------------------

struct FoldPlan {
  int outer_k = 10;
  int outer_repeats = 10;
  int inner_k = 10;
  int inner_repeats = 5;
  std::uint64_t seed = 13;

  void validate() const;
};

/// Seeded shuffle followed by contiguous chunking into k disjoint test sets
/// covering [0, n); sizes differ by at most one and each set is sorted.
std::vector<std::vector<Index>> kfold_split(Index n, int k, std::uint64_t seed);

// --- metrics ---------------------------------------------------------------------

/// Rank-based AUC (Mann-Whitney with average ranks), identical to counting
/// correctly ordered positive/negative pairs with ties worth 1/2. Requires
/// both classes.
Scalar roc_auc(const Eigen::Ref<const Vector>& scores,
               const std::vector<int>& labels);

struct ConfusionCounts {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const { return tp + tn + fp + fn; }
  Scalar accuracy_pct() const;                  // (tp+tn)/total * 100
  std::optional<Scalar> sensitivity_pct() const;  // tp/(tp+fn) * 100
  std::optional<Scalar> specificity_pct() const;  // tn/(tn+fp) * 100
};

ConfusionCounts confusion_at_half(const Eigen::Ref<const Vector>& probs,
                                  const std::vector<int>& labels);

struct FoldMetrics {
  int repeat = 0;
  int fold = 0;
  ConfusionCounts confusion;
  Scalar accuracy = 0.0;  // percent
  std::optional<Scalar> sensitivity;
  std::optional<Scalar> specificity;
  std::optional<Scalar> auc;  // absent when the test fold has one class
};

struct AggregateStat {
  Scalar mean = 0.0;
  Scalar sd_over_folds = 0.0;    // sample sd of every fold value
  Scalar sd_over_repeats = 0.0;  // sample sd of per-repeat means
  long count = 0;
};

struct MetricsReport {
  std::string stage;
  std::vector<FoldMetrics> per_fold;
  AggregateStat accuracy;
  AggregateStat sensitivity;
  AggregateStat specificity;
  AggregateStat auc;
};

/// Fills the aggregate blocks from per_fold (means over defined values).
void finalize_report(MetricsReport& report);

// --- pooling exports and selection frequencies -----------------------------------

struct PooledSubject {
  std::string subject_id;
  Index n_nodes = 0;
  Index feat_dim = 0;
  Scalar ratio = 0.0;
  SparseFeatureVector vec;
  std::vector<Index> selected;  // original numbering
  std::vector<std::tuple<Index, Index, Scalar>> edges;  // original numbering
};

PooledSubject pool_subject(const SubjectGraph& g, const PoolingConfig& cfg);

/// Pools every subject; `jobs` > 1 fans the pure per-subject work out to a
/// worker pool. Results are positionally identical regardless of job count.
std::vector<PooledSubject> pool_subjects(const std::vector<SubjectGraph>& subjects,
                                         const PoolingConfig& cfg, int jobs = 1);

struct SelectionFrequencyTable {
  std::string group;
  std::size_t group_size = 0;
  int top_m = 15;
  struct NodeFreq {
    Index node;
    long count;
    Scalar frequency;  // count / group_size
  };
  struct EdgeFreq {
    Index a, b;  // unordered pair, a < b
    long count;
    Scalar frequency;
  };
  std::vector<NodeFreq> nodes;
  std::vector<EdgeFreq> edges;
};

/// Counts how often each node (and unordered predicted edge) appears across
/// the listed group members and keeps the top_m of each, ordered by count
/// descending then index ascending.
SelectionFrequencyTable selection_frequencies(
    const std::vector<PooledSubject>& results,
    const std::vector<std::size_t>& group_members, const std::string& group,
    int top_m = 15);

void write_node_frequency_csv(const std::filesystem::path& path,
                              const SelectionFrequencyTable& table);
void write_edge_frequency_csv(const std::filesystem::path& path,
                              const SelectionFrequencyTable& table);

void write_pooling_summary_csv(const std::filesystem::path& path,
                               const std::vector<PooledSubject>& results);
void write_pooling_edges_csv(const std::filesystem::path& path,
                             const std::vector<PooledSubject>& results);
/// Rebuilds selections (and, when edges_path is non-empty, edges) from the
/// CSV exports; the sparse vectors are left empty.
std::vector<PooledSubject> read_pooling_summary_csv(
    const std::filesystem::path& summary_path,
    const std::filesystem::path& edges_path = {});

// --- pipeline ---------------------------------------------------------------------

/// Post-pooling cohort view consumed by the training pipeline.
struct PipelineData {
  Index n_nodes = 0;
  Index feat_dim = 0;
  std::vector<std::string> ids;
  std::vector<SparseFeatureVector> pooled;
  std::vector<int> labels;
  std::vector<PhenotypeRecord> phenotypes;

  Index n_subjects() const { return static_cast<Index>(pooled.size()); }
};

PipelineData make_pipeline_data(const std::vector<PooledSubject>& pooled,
                                const std::vector<PhenotypeRecord>& phenotypes);

/// Stacks the pooled sparse vectors into one row-per-subject sparse matrix.
SpMatrix stack_sparse_rows(const PipelineData& data);

struct PipelineConfig {
  Scalar population_threshold = 0.5;
  nn::MlpConfig mlp;            // input_dim is filled from the data
  nn::TrainConfig mlp_train;
  nn::GcnConfig gcn;
  nn::TrainConfig gcn_train;
  nn::TrainConfig lr_train;     // logistic head on the embeddings
  FoldPlan folds;
  bool run_lr = true;
  bool run_gcn = true;
  Scalar gcn_val_fraction = 0.1;  // carved from the train split when the GCN
                                  // keeps a best-validation checkpoint
};

/// Models trained for one outer fold, offered to the sink right after the
/// fold finishes (e.g. for checkpointing). References die with the call.
struct FoldArtifacts {
  int repeat = 0;
  int fold = 0;
  const nn::ModelState& mlp;
  const nn::ModelState* lr = nullptr;   // null when the stage is disabled
  const nn::ModelState* gcn = nullptr;
};
using FoldSink = std::function<void(const FoldArtifacts&)>;

struct PipelineResult {
  MetricsReport mlp;
  MetricsReport lr;
  MetricsReport gcn;
};

/// Nested cross-validation over the cohort. Per outer fold: select the best
/// feature extractor by inner-CV validation accuracy, embed every subject,
/// then score the MLP itself, a logistic head, and the population-graph GCN
/// on the held-out subjects. Deterministic for a fixed plan seed.
PipelineResult run_pipeline(const PipelineData& data, const PipelineConfig& cfg,
                            const FoldSink& sink = nullptr);

/// Rescores saved per-fold models on the same plan without retraining.
/// The loader returns the checkpointed state for (repeat, fold, stage) with
/// stage one of "mlp", "lr", "gcn".
using StateLoader = std::function<nn::ModelState(int repeat, int fold,
                                                 const std::string& stage)>;
PipelineResult evaluate_pipeline(const PipelineData& data,
                                 const PipelineConfig& cfg,
                                 const StateLoader& loader);

// --- report serialization -----------------------------------------------------------

/// Schema-versioned metrics JSON: config echo plus the per-fold and
/// aggregate blocks of every stage. Contains no timestamps, so identical
/// runs serialize to identical bytes.
std::string metrics_report_json(const PipelineConfig& cfg,
                                const std::vector<const MetricsReport*>& stages);

void write_confusion_csv(const std::filesystem::path& path,
                         const std::vector<const MetricsReport*>& stages);

/// ROC points (FPR, TPR at every distinct threshold) per stage and fold.
struct RocInput {
  std::string stage;
  int repeat = 0;
  int fold = 0;
  Vector scores;
  std::vector<int> labels;
};
void write_roc_points_csv(const std::filesystem::path& path,
                          const std::vector<RocInput>& inputs);

}  // namespace neuropool
