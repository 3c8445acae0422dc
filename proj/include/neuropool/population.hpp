// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuropool/adjacency.hpp"
#include "neuropool/types.hpp"

namespace neuropool {

enum class Gender { male, female };

struct PhenotypeRecord {
  std::string subject_id;
  Scalar age = 0.0;  // years, > 0
  Gender gender = Gender::male;
  std::string site;
  std::optional<std::string> handedness;  // sparsely collected; see schema
  std::optional<int> dx_group;            // 1 = case, 0 = control
};

/// Vocabulary and scaling derived from a cohort; encoding a record requires
/// the schema so that one-hot positions and the age range are stable.
struct PhenotypeSchema {
  Scalar age_min = 0.0;
  Scalar age_max = 0.0;
  std::vector<std::string> sites;  // sorted, unique
  // Handedness is excluded by default (it is missing for a large fraction
  // of typical cohorts); enable only when the cohort has it for everyone.
  bool include_handedness = false;
  std::vector<std::string> handedness_values;  // sorted, unique, when enabled

  Index dim() const {
    return 3 + static_cast<Index>(sites.size()) +
           (include_handedness ? static_cast<Index>(handedness_values.size())
                               : 0);
  }
};

PhenotypeSchema build_schema(const std::vector<PhenotypeRecord>& records,
                             bool include_handedness = false);

/// [age scaled to [0,1] by cohort min/max] ++ one-hot(gender) ++
/// one-hot(site) (++ one-hot(handedness) when enabled).
Vector encode_phenotype(const PhenotypeRecord& rec,
                        const PhenotypeSchema& schema);

/// Absolute cosine similarity of two encoded phenotype vectors; lies in
/// [0, 1] and is exactly symmetric.
Scalar phenotype_similarity(const Eigen::Ref<const Vector>& mu,
                            const Eigen::Ref<const Vector>& mv);

/// Subject-level graph: nodes are subjects and an undirected unit edge links
/// u and v iff their phenotype similarity strictly exceeds `threshold`.
/// The graph carries dense per-subject features, labels and fold masks once
/// the pipeline fills them in.
struct PopulationGraph {
  AdjacencyMatrix adj;          // symmetric 0/1, zero diagonal
  Matrix features;              // one row per subject (filled by the pipeline)
  std::vector<int> labels;      // 1 = case, 0 = control
  std::vector<Index> train_idx;
  std::vector<Index> test_idx;
};

PopulationGraph build_population_graph(
    const std::vector<PhenotypeRecord>& records, Scalar threshold = 0.5);

// --- phenotype CSV -----------------------------------------------------------
//
// Columns: subject_id,age,gender,site,handedness,dx_group (header required,
// handedness may be blank). Gender accepts male/female/M/F/1/2 and dx_group
// accepts ASD/control/1/2, matching common cohort exports.

std::vector<PhenotypeRecord> read_phenotype_csv(
    const std::filesystem::path& path);
void write_phenotype_csv(const std::filesystem::path& path,
                         const std::vector<PhenotypeRecord>& records);

std::string gender_name(Gender g);

}  // namespace neuropool
