// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neuropool/io.hpp"
#include "neuropool/rng.hpp"

namespace neuropool {

namespace {

Scalar parse_cell(const std::string& field, const std::string& path,
                  std::size_t row, std::size_t col) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  Scalar value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || begin == end) {
    throw DataError(path + ": non-numeric cell at row " + std::to_string(row) +
                    ", column " + std::to_string(col));
  }
  if (!std::isfinite(value)) {
    throw DataError(path + ": non-finite value at row " + std::to_string(row) +
                    ", column " + std::to_string(col));
  }
  return value;
}

void zscore_rows(Matrix& m) {
  const auto cols = static_cast<Scalar>(m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const Scalar mean = m.row(i).mean();
    const Scalar var = (m.row(i).array() - mean).square().sum() / cols;
    if (var > 0.0) {
      m.row(i) = (m.row(i).array() - mean) / std::sqrt(var);
    } else {
      m.row(i).setZero();  // flat-lined channel
    }
  }
}

Matrix fit_length(const Matrix& m, int target, TimeseriesPolicy::LengthMode mode,
                  const std::string& path) {
  const Index t = m.cols();
  if (t == target) return m;
  if (t > target) return m.leftCols(target);  // truncate keeps the prefix
  if (mode == TimeseriesPolicy::LengthMode::truncate) {
    throw DataError(path + ": series has " + std::to_string(t) +
                    " time points but " + std::to_string(target) +
                    " are required (policy: truncate)");
  }
  Matrix padded = Matrix::Zero(m.rows(), target);
  const Index left = (target - t) / 2;  // symmetric, extra point on the right
  padded.middleCols(left, t) = m;
  return padded;
}

}  // namespace

Matrix load_timeseries(const std::filesystem::path& path,
                       const TimeseriesPolicy& policy) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());

  std::vector<std::vector<Scalar>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool skipped_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (policy.header && !skipped_header) {
      skipped_header = true;
      continue;
    }
    if (line.empty() || line == "\r") continue;
    const auto fields = io::split_csv_line(line);
    std::vector<Scalar> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row[c] = parse_cell(fields[c], path.string(), lineno, c + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(path.string() + ": row " + std::to_string(lineno) +
                      " has " + std::to_string(row.size()) +
                      " columns, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  // File orientation: rows = time points unless transposed.
  const std::size_t file_rois = policy.transposed ? rows.size() : rows.front().size();
  const std::size_t file_t = policy.transposed ? rows.front().size() : rows.size();
  if (file_rois != static_cast<std::size_t>(policy.n_rois)) {
    throw DataError(path.string() + ": expected " +
                    std::to_string(policy.n_rois) + " ROI columns, found " +
                    std::to_string(file_rois));
  }
  if (file_t < 2) {
    throw DataError(path.string() + ": need at least 2 time points, found " +
                    std::to_string(file_t));
  }

  Matrix ts(policy.n_rois, static_cast<Index>(file_t));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (policy.transposed) {
        ts(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
      } else {
        ts(static_cast<Index>(c), static_cast<Index>(r)) = rows[r][c];
      }
    }
  }
  if (policy.target_len) {
    ts = fit_length(ts, *policy.target_len, policy.mode, path.string());
  }
  if (policy.zscore) zscore_rows(ts);
  return ts;
}

SubjectGraph build_brain_graph(const Eigen::Ref<const Matrix>& ts,
                               std::string subject_id) {
  const Index r = ts.rows();
  if (r < 1 || ts.cols() < 1) {
    throw DataError("build_brain_graph: empty time-series matrix");
  }
  check_finite(ts, "build_brain_graph input");

  SubjectGraph g;
  g.subject_id = std::move(subject_id);
  g.feats.resize(r + 1, ts.cols());
  g.feats.topRows(r) = ts;
  g.feats.row(r) = ts.colwise().mean();  // global-mean node

  g.adj = AdjacencyMatrix(r + 1, true);
  for (Index i = 0; i < r; ++i) {
    g.adj.set(i, i, 1.0);        // per-ROI self-loop
    g.adj.set(i, r, 1.0);        // link to the global-mean node
    for (Index j = i + 1; j < r; ++j) {
      g.adj.set(i, j, 1.0);      // every unordered ROI pair
    }
  }
  return g;
}

// --- manifest -----------------------------------------------------------------

CohortManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_text_file(path.string()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + path.string() + ": " + e.what());
  }
  if (doc.value("schema_version", 0) != 1) {
    throw DataError("manifest " + path.string() +
                    ": unsupported schema_version");
  }
  CohortManifest m;
  m.root = path.parent_path();
  m.atlas = doc.value("atlas", std::string("ho110+global"));
  m.phenotypes = m.root / doc.at("phenotypes").get<std::string>();

  const auto& pol = doc.at("policy");
  m.policy.n_rois = pol.value("n_rois", 110);
  if (pol.contains("target_len") && !pol.at("target_len").is_null()) {
    m.policy.target_len = pol.at("target_len").get<int>();
  }
  const std::string mode = pol.value("mode", std::string("truncate"));
  if (mode == "truncate") {
    m.policy.mode = TimeseriesPolicy::LengthMode::truncate;
  } else if (mode == "zero_pad") {
    m.policy.mode = TimeseriesPolicy::LengthMode::zero_pad;
  } else {
    throw DataError("manifest: unknown length mode '" + mode + "'");
  }
  m.policy.zscore = pol.value("zscore", true);
  m.policy.header = pol.value("header", false);
  m.policy.transposed = pol.value("transposed", false);

  std::set<std::string> seen;
  for (const auto& entry : doc.at("subjects")) {
    ManifestEntry e;
    e.id = entry.at("id").get<std::string>();
    e.timeseries = m.root / entry.at("path").get<std::string>();
    if (!seen.insert(e.id).second) {
      throw DataError("manifest: duplicate subject id '" + e.id + "'");
    }
    if (!std::filesystem::exists(e.timeseries)) {
      throw DataError("manifest: missing time-series file " +
                      e.timeseries.string());
    }
    m.subjects.push_back(std::move(e));
  }
  if (!std::filesystem::exists(m.phenotypes)) {
    throw DataError("manifest: missing phenotype file " + m.phenotypes.string());
  }
  return m;
}

void write_manifest(const std::filesystem::path& path,
                    const CohortManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["atlas"] = manifest.atlas;
  doc["phenotypes"] =
      std::filesystem::relative(manifest.phenotypes, path.parent_path())
          .generic_string();
  auto& pol = doc["policy"];
  pol["n_rois"] = manifest.policy.n_rois;
  if (manifest.policy.target_len) {
    pol["target_len"] = *manifest.policy.target_len;
  } else {
    pol["target_len"] = nullptr;
  }
  pol["mode"] = manifest.policy.mode == TimeseriesPolicy::LengthMode::truncate
                    ? "truncate"
                    : "zero_pad";
  pol["zscore"] = manifest.policy.zscore;
  pol["header"] = manifest.policy.header;
  pol["transposed"] = manifest.policy.transposed;
  auto& subjects = doc["subjects"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.subjects) {
    subjects.push_back(
        {{"id", e.id},
         {"path", std::filesystem::relative(e.timeseries, path.parent_path())
                      .generic_string()}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << doc.dump(2) << "\n";
}

Cohort load_cohort(const CohortManifest& manifest) {
  auto phenotypes = read_phenotype_csv(manifest.phenotypes);
  std::map<std::string, const PhenotypeRecord*> by_id;
  for (const auto& rec : phenotypes) by_id[rec.subject_id] = &rec;

  // Raw matrices first so the cohort-minimum length rule can apply.
  TimeseriesPolicy raw_policy = manifest.policy;
  raw_policy.zscore = false;
  raw_policy.target_len.reset();
  std::vector<Matrix> raw;
  raw.reserve(manifest.subjects.size());
  Index min_t = std::numeric_limits<Index>::max();
  for (const auto& e : manifest.subjects) {
    raw.push_back(load_timeseries(e.timeseries, raw_policy));
    min_t = std::min(min_t, raw.back().cols());
  }
  const int target = manifest.policy.target_len
                         ? *manifest.policy.target_len
                         : static_cast<int>(min_t);

  Cohort cohort;
  for (std::size_t s = 0; s < manifest.subjects.size(); ++s) {
    const auto& e = manifest.subjects[s];
    auto it = by_id.find(e.id);
    if (it == by_id.end()) {
      throw DataError("subject " + e.id + " has no phenotype row");
    }
    Matrix ts = fit_length(raw[s], target, manifest.policy.mode,
                           e.timeseries.string());
    if (manifest.policy.zscore) zscore_rows(ts);
    SubjectGraph g = build_brain_graph(ts, e.id);
    g.label = it->second->dx_group;
    cohort.subjects.push_back(std::move(g));
    cohort.phenotypes.push_back(*it->second);
  }
  return cohort;
}

// --- synthetic cohorts -----------------------------------------------------------

namespace {

// Fixed signature regions for group-1 subjects.
constexpr std::array<Index, 10> kSignatureRois = {3,  17, 29, 41, 53,
                                                  67, 79, 88, 97, 104};

// Shared deterministic component: a unit square wave with period 8.
Scalar signature_wave(Index t) { return ((t / 4) % 2 == 0) ? 1.0 : -1.0; }

// Heavy-tailed background: sparse Gaussian bursts with unit variance.
// The burst probability keeps typical rows spiky, which makes the L1-based
// node scores clearly separate pattern-carrying regions from background.
constexpr Scalar kBurstProb = 0.1;

struct RawSynth {
  std::vector<Matrix> timeseries;  // 110 x T each, pre-normalization
  std::vector<PhenotypeRecord> phenotypes;
};

RawSynth synth_raw(const SynthConfig& cfg) {
  if (cfg.n_subjects < 4) {
    throw DataError("synth_cohort: need at least 4 subjects");
  }
  if (!(cfg.class_gap >= 0.0) || !std::isfinite(cfg.class_gap)) {
    throw DataError("synth_cohort: class_gap must be finite and >= 0");
  }
  if (cfg.timepoints < 2) {
    throw DataError("synth_cohort: need at least 2 time points");
  }
  const std::array<std::string, 3> sites = {"SITE_A", "SITE_B", "SITE_C"};
  const Scalar burst_scale = 1.0 / std::sqrt(kBurstProb);

  RawSynth raw;
  RngStream rng(cfg.seed);
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const int label = s % 2;  // balanced groups

    PhenotypeRecord rec;
    char id[32];
    std::snprintf(id, sizeof(id), "synth%04d", s);
    rec.subject_id = id;
    rec.age = 7.0 + 51.0 * rng.uniform01();
    rec.gender = rng.below(2) == 0 ? Gender::male : Gender::female;
    rec.site = sites[rng.below(3)];
    rec.dx_group = label;
    raw.phenotypes.push_back(std::move(rec));

    Matrix ts(110, cfg.timepoints);
    for (Index roi = 0; roi < 110; ++roi) {
      const bool signature =
          label == 1 && std::find(kSignatureRois.begin(), kSignatureRois.end(),
                                  roi) != kSignatureRois.end();
      for (Index t = 0; t < cfg.timepoints; ++t) {
        Scalar v = rng.uniform01() < kBurstProb ? burst_scale * rng.normal() : 0.0;
        if (signature) v += cfg.class_gap * signature_wave(t);
        ts(roi, t) = v;
      }
    }
    raw.timeseries.push_back(std::move(ts));
  }
  return raw;
}

}  // namespace

Cohort synth_cohort(const SynthConfig& cfg) {
  RawSynth raw = synth_raw(cfg);
  Cohort cohort;
  cohort.phenotypes = std::move(raw.phenotypes);
  for (std::size_t s = 0; s < raw.timeseries.size(); ++s) {
    Matrix ts = std::move(raw.timeseries[s]);
    zscore_rows(ts);  // default ingestion normalization
    SubjectGraph g = build_brain_graph(ts, cohort.phenotypes[s].subject_id);
    g.label = cohort.phenotypes[s].dx_group;
    cohort.subjects.push_back(std::move(g));
  }
  return cohort;
}

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::Ref<const Matrix>& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << io::format_f64(m(i, j));
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::filesystem::path write_synth_cohort(const SynthConfig& cfg,
                                         const std::filesystem::path& dir) {
  RawSynth raw = synth_raw(cfg);
  std::filesystem::create_directories(dir / "timeseries");

  CohortManifest manifest;
  manifest.root = dir;
  manifest.phenotypes = dir / "phenotypes.csv";
  manifest.policy.n_rois = 110;
  manifest.policy.target_len = cfg.timepoints;

  for (std::size_t s = 0; s < raw.timeseries.size(); ++s) {
    const auto& id = raw.phenotypes[s].subject_id;
    const auto ts_path = dir / "timeseries" / (id + ".csv");
    // On disk rows are time points, matching the default orientation.
    write_matrix_csv(ts_path, raw.timeseries[s].transpose());
    manifest.subjects.push_back({id, ts_path});
  }
  write_phenotype_csv(manifest.phenotypes, raw.phenotypes);
  const auto manifest_path = dir / "manifest.json";
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace neuropool
