// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuropool/adjacency.hpp"
#include "neuropool/population.hpp"
#include "neuropool/types.hpp"

namespace neuropool {

/// One subject's brain graph: node features are ROI time series (plus the
/// appended global-mean node) and the adjacency is the initial connectivity
/// scheme. With the default 110-region atlas the graph has 111 nodes and
/// 6215 edges.
struct SubjectGraph {
  std::string subject_id;
  Matrix feats;  // nodes x time points
  AdjacencyMatrix adj;
  std::optional<int> label;  // 1 = case, 0 = control
};

struct TimeseriesPolicy {
  int n_rois = 110;
  std::optional<int> target_len;  // unset: keep each file's own length
  enum class LengthMode { truncate, zero_pad } mode = LengthMode::truncate;
  bool zscore = true;   // per-ROI standardization; constant rows map to zero
  bool header = false;  // skip one header row
  bool transposed = false;  // file rows are ROIs instead of time points
};

/// Reads one ROI time-series CSV into an n_rois x T matrix. Rows of the
/// file are time points (columns are ROIs) unless `transposed`. Sequences
/// are cut or symmetrically zero-padded to `target_len` when set. Parse
/// problems raise DataError naming the offending row/column.
Matrix load_timeseries(const std::filesystem::path& path,
                       const TimeseriesPolicy& policy);

/// Builds the initial brain connectivity from an R x T ROI matrix: appends
/// a global-mean node whose row is the columnwise mean of the R rows, then
/// connects every unordered ROI pair, adds one self-loop per ROI, and links
/// the global node to each ROI, all with unit weight. For R = 110 that is
/// 111 nodes and C(110,2) + 110 + 110 = 6215 edges.
SubjectGraph build_brain_graph(const Eigen::Ref<const Matrix>& ts,
                               std::string subject_id = "");

// --- manifest ----------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::filesystem::path timeseries;  // resolved against the manifest dir
};

struct CohortManifest {
  std::filesystem::path root;
  std::string atlas = "ho110+global";
  std::filesystem::path phenotypes;
  TimeseriesPolicy policy;
  std::vector<ManifestEntry> subjects;
};

CohortManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const CohortManifest& manifest);

struct Cohort {
  std::vector<SubjectGraph> subjects;
  std::vector<PhenotypeRecord> phenotypes;  // aligned with subjects
};

/// Loads every subject of the manifest. When the policy has no target_len,
/// all series are truncated to the cohort minimum so downstream feature
/// vectors share one width.
Cohort load_cohort(const CohortManifest& manifest);

// --- synthetic cohorts ---------------------------------------------------------

/// Desk-scale generator. Two balanced diagnosis groups; group-1 subjects
/// carry an extra shared square-wave component on a fixed set of signature
/// ROIs, which raises both the amplitude of those regions and the coupling
/// between them by `class_gap` (in units of the background scale). The
/// background is heavy-tailed (sparse Gaussian bursts), phenotypes span
/// three synthetic sites, both genders, and ages uniform in [7, 58]. Fully
/// deterministic per seed; class_gap = 0 makes the groups identically
/// distributed.
struct SynthConfig {
  int n_subjects = 0;  // >= 4
  int timepoints = 64;
  Scalar class_gap = 0.0;  // >= 0
  std::uint64_t seed = 0;
};

Cohort synth_cohort(const SynthConfig& cfg);

/// Writes the same cohort as on-disk files (per-subject raw time-series
/// CSVs, phenotype CSV, manifest JSON) so synthetic and real inputs travel
/// the identical ingestion path. Returns the manifest path.
std::filesystem::path write_synth_cohort(const SynthConfig& cfg,
                                         const std::filesystem::path& dir);

/// Serializes a matrix as CSV (one row per line); used by the synthetic
/// writer and by tests to round-trip time series bit-exactly.
void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::Ref<const Matrix>& m);

}  // namespace neuropool
