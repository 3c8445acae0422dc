// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#include "neuropool/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "neuropool/io.hpp"

namespace neuropool {

PhenotypeSchema build_schema(const std::vector<PhenotypeRecord>& records,
                             bool include_handedness) {
  if (records.empty()) throw DataError("phenotype schema needs >= 1 record");
  PhenotypeSchema schema;
  schema.include_handedness = include_handedness;
  schema.age_min = records.front().age;
  schema.age_max = records.front().age;
  std::set<std::string> sites;
  std::set<std::string> handed;
  for (const auto& rec : records) {
    if (!(std::isfinite(rec.age) && rec.age > 0.0)) {
      throw DataError("subject " + rec.subject_id +
                      ": age must be finite and positive");
    }
    if (rec.site.empty()) {
      throw DataError("subject " + rec.subject_id + ": site missing");
    }
    schema.age_min = std::min(schema.age_min, rec.age);
    schema.age_max = std::max(schema.age_max, rec.age);
    sites.insert(rec.site);
    if (include_handedness) {
      if (!rec.handedness || rec.handedness->empty()) {
        throw DataError("subject " + rec.subject_id +
                        ": handedness requested but missing");
      }
      handed.insert(*rec.handedness);
    }
  }
  schema.sites.assign(sites.begin(), sites.end());
  schema.handedness_values.assign(handed.begin(), handed.end());
  return schema;
}

namespace {

Index vocab_index(const std::vector<std::string>& vocab,
                  const std::string& value, const char* what) {
  auto it = std::lower_bound(vocab.begin(), vocab.end(), value);
  if (it == vocab.end() || *it != value) {
    std::string known;
    for (const auto& v : vocab) known += (known.empty() ? "" : ", ") + v;
    throw DataError(std::string("unknown ") + what + " '" + value +
                    "' (schema knows: " + known + ")");
  }
  return static_cast<Index>(it - vocab.begin());
}

}  // namespace

Vector encode_phenotype(const PhenotypeRecord& rec,
                        const PhenotypeSchema& schema) {
  Vector m = Vector::Zero(schema.dim());
  const Scalar span = schema.age_max - schema.age_min;
  Scalar age01 = span > 0.0 ? (rec.age - schema.age_min) / span : 0.0;
  m[0] = std::clamp(age01, 0.0, 1.0);
  m[1 + (rec.gender == Gender::female ? 1 : 0)] = 1.0;
  m[3 + vocab_index(schema.sites, rec.site, "site")] = 1.0;
  if (schema.include_handedness) {
    if (!rec.handedness) {
      throw DataError("subject " + rec.subject_id +
                      ": handedness requested but missing");
    }
    m[3 + static_cast<Index>(schema.sites.size()) +
      vocab_index(schema.handedness_values, *rec.handedness, "handedness")] =
        1.0;
  }
  return m;
}

Scalar phenotype_similarity(const Eigen::Ref<const Vector>& mu,
                            const Eigen::Ref<const Vector>& mv) {
  if (mu.size() != mv.size()) {
    throw DataError("phenotype_similarity: dimension mismatch");
  }
  const Scalar denom = mu.norm() * mv.norm();
  if (denom == 0.0) {
    throw DataError("phenotype_similarity: zero-norm phenotype vector");
  }
  return std::min(std::abs(mu.dot(mv)) / denom, 1.0);
}

PopulationGraph build_population_graph(
    const std::vector<PhenotypeRecord>& records, Scalar threshold) {
  if (records.size() < 2) {
    throw DataError("population graph needs >= 2 subjects");
  }
  const PhenotypeSchema schema = build_schema(records);
  std::vector<Vector> encoded;
  encoded.reserve(records.size());
  for (const auto& rec : records) encoded.push_back(encode_phenotype(rec, schema));

  PopulationGraph pg;
  pg.adj = AdjacencyMatrix(static_cast<Index>(records.size()), true);
  for (std::size_t u = 0; u < records.size(); ++u) {
    for (std::size_t v = u + 1; v < records.size(); ++v) {
      if (phenotype_similarity(encoded[u], encoded[v]) > threshold) {
        pg.adj.set(static_cast<Index>(u), static_cast<Index>(v), 1.0);
      }
    }
  }
  return pg;
}

// --- phenotype CSV -----------------------------------------------------------

std::string gender_name(Gender g) {
  return g == Gender::male ? "male" : "female";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

Gender parse_gender(const std::string& raw, const std::string& id) {
  const std::string g = lower(raw);
  if (g == "male" || g == "m" || g == "1") return Gender::male;
  if (g == "female" || g == "f" || g == "2") return Gender::female;
  throw DataError("subject " + id + ": unrecognized gender '" + raw + "'");
}

int parse_dx(const std::string& raw, const std::string& id) {
  const std::string d = lower(raw);
  if (d == "asd" || d == "case" || d == "1") return 1;
  if (d == "control" || d == "tc" || d == "2" || d == "0") return 0;
  throw DataError("subject " + id + ": unrecognized dx_group '" + raw + "'");
}

}  // namespace

std::vector<PhenotypeRecord> read_phenotype_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("phenotype CSV is empty: " + path.string());
  }
  const auto header = io::split_csv_line(line);
  const std::vector<std::string> expected = {"subject_id", "age",  "gender",
                                             "handedness", "site", "dx_group"};
  for (const auto& col : expected) {
    if (std::find(header.begin(), header.end(), col) == header.end()) {
      throw DataError("phenotype CSV " + path.string() +
                      ": missing required column '" + col + "'");
    }
  }
  auto col = [&](const char* name) {
    return std::find(header.begin(), header.end(), name) - header.begin();
  };
  const auto c_id = col("subject_id"), c_age = col("age"),
             c_gender = col("gender"), c_site = col("site"),
             c_hand = col("handedness"), c_dx = col("dx_group");

  std::vector<PhenotypeRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = io::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    PhenotypeRecord rec;
    rec.subject_id = fields[c_id];
    try {
      rec.age = std::stod(fields[c_age]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": bad age '" + fields[c_age] + "'");
    }
    rec.gender = parse_gender(fields[c_gender], rec.subject_id);
    rec.site = fields[c_site];
    if (!fields[c_hand].empty()) rec.handedness = fields[c_hand];
    if (!fields[c_dx].empty()) rec.dx_group = parse_dx(fields[c_dx], rec.subject_id);
    records.push_back(std::move(rec));
  }
  return records;
}

void write_phenotype_csv(const std::filesystem::path& path,
                         const std::vector<PhenotypeRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "subject_id,age,gender,site,handedness,dx_group\n";
  for (const auto& rec : records) {
    out << rec.subject_id << ',' << io::format_f64(rec.age) << ','
        << gender_name(rec.gender) << ',' << rec.site << ','
        << rec.handedness.value_or("") << ',';
    if (rec.dx_group) out << (*rec.dx_group == 1 ? "ASD" : "control");
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace neuropool
