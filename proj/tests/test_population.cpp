// Copyright 2026 The Neuropool Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "neuropool/population.hpp"
#include "neuropool/rng.hpp"
#include "oracles.hpp"

using namespace neuropool;

namespace {

PhenotypeRecord make_record(std::string id, Scalar age, Gender g,
                            std::string site) {
  PhenotypeRecord rec;
  rec.subject_id = std::move(id);
  rec.age = age;
  rec.gender = g;
  rec.site = std::move(site);
  return rec;
}

std::vector<PhenotypeRecord> random_cohort(std::size_t n, RngStream& rng) {
  const std::array<std::string, 4> sites = {"A", "B", "C", "D"};
  std::vector<PhenotypeRecord> cohort;
  for (std::size_t i = 0; i < n; ++i) {
    cohort.push_back(make_record(
        "s" + std::to_string(i), 6.5 + 51.5 * rng.uniform01(),
        rng.below(2) == 0 ? Gender::male : Gender::female,
        sites[rng.below(4)]));
  }
  return cohort;
}

}  // namespace

TEST_CASE("encoding scales age by the cohort range") {
  // Age bounds mirror a typical multi-site cohort: 6.5 to 58 years.
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 6.5, Gender::male, "NYU"),
      make_record("b", 58.0, Gender::female, "UCLA"),
      make_record("c", 32.25, Gender::male, "NYU"),
  };
  const auto schema = build_schema(cohort);
  CHECK(schema.dim() == 1 + 2 + 2);
  const Vector youngest = encode_phenotype(cohort[0], schema);
  CHECK(youngest[0] == 0.0);
  const Vector oldest = encode_phenotype(cohort[1], schema);
  CHECK(oldest[0] == 1.0);
  const Vector mid = encode_phenotype(cohort[2], schema);
  CHECK(mid[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("identical records encode identically; gender flips two slots") {
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 20.0, Gender::male, "X"),
      make_record("b", 20.0, Gender::male, "X"),
      make_record("c", 20.0, Gender::female, "X"),
      make_record("d", 40.0, Gender::male, "Y"),
  };
  const auto schema = build_schema(cohort);
  const Vector va = encode_phenotype(cohort[0], schema);
  const Vector vb = encode_phenotype(cohort[1], schema);
  CHECK((va - vb).cwiseAbs().maxCoeff() == 0.0);

  const Vector vc = encode_phenotype(cohort[2], schema);
  int differing = 0;
  for (Index i = 0; i < va.size(); ++i) {
    if (va[i] != vc[i]) ++differing;
  }
  CHECK(differing == 2);  // exactly the two gender slots
}

TEST_CASE("unknown site names are rejected with the vocabulary listed") {
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 10.0, Gender::male, "KKI"),
      make_record("b", 12.0, Gender::female, "NYU"),
  };
  const auto schema = build_schema(cohort);
  auto probe = make_record("z", 11.0, Gender::male, "OLIN");
  CHECK_THROWS_WITH_AS(encode_phenotype(probe, schema),
                       doctest::Contains("unknown site"), DataError);
}

TEST_CASE("handedness is ignored unless the schema opts in") {
  auto with_hand = make_record("a", 10.0, Gender::male, "X");
  with_hand.handedness = "right";
  auto other = make_record("b", 12.0, Gender::male, "X");
  other.handedness = "left";
  const std::vector<PhenotypeRecord> cohort = {with_hand, other};

  const auto plain = build_schema(cohort);
  CHECK(plain.dim() == 1 + 2 + 1);

  const auto extended = build_schema(cohort, /*include_handedness=*/true);
  CHECK(extended.dim() == 1 + 2 + 1 + 2);
  const Vector v = encode_phenotype(with_hand, extended);
  CHECK(v[extended.dim() - 1] == 1.0);  // "right" sorts after "left"

  auto missing = make_record("c", 11.0, Gender::male, "X");
  const std::vector<PhenotypeRecord> incomplete = {with_hand, missing};
  CHECK_THROWS_AS(build_schema(incomplete, true), DataError);
}

TEST_CASE("similarity is 1 for identical records and 0 for disjoint one-hots") {
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 10.0, Gender::male, "X"),
      make_record("b", 10.0, Gender::male, "X"),
      make_record("c", 30.0, Gender::female, "Y"),
  };
  const auto schema = build_schema(cohort);
  const Vector va = encode_phenotype(cohort[0], schema);
  const Vector vb = encode_phenotype(cohort[1], schema);
  CHECK(phenotype_similarity(va, vb) == doctest::Approx(1.0).epsilon(1e-15));

  // Subject a sits at the age minimum so its age slot is 0; subject c
  // shares neither gender nor site, leaving orthogonal vectors.
  const Vector vc = encode_phenotype(cohort[2], schema);
  CHECK(phenotype_similarity(va, vc) == 0.0);
}

TEST_CASE("similarity matches a hand dot-product oracle") {
  // Same gender and site; ages at the scaled extremes 0 and 1.
  // M_u = [0,1,0,1], M_v = [1,1,0,1]: dot = 2, norms sqrt(2)*sqrt(3).
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 8.0, Gender::male, "X"),
      make_record("b", 28.0, Gender::male, "X"),
  };
  const auto schema = build_schema(cohort);
  const Vector u = encode_phenotype(cohort[0], schema);
  const Vector v = encode_phenotype(cohort[1], schema);
  const Scalar expected = 2.0 / (std::sqrt(2.0) * std::sqrt(3.0));
  CHECK(phenotype_similarity(u, v) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("similarity is exactly symmetric and within [0, 1]") {
  RngStream rng(41);
  const auto cohort = random_cohort(25, rng);
  const auto schema = build_schema(cohort);
  std::vector<Vector> enc;
  for (const auto& rec : cohort) enc.push_back(encode_phenotype(rec, schema));
  for (std::size_t u = 0; u < enc.size(); ++u) {
    for (std::size_t v = u + 1; v < enc.size(); ++v) {
      const Scalar s_uv = phenotype_similarity(enc[u], enc[v]);
      const Scalar s_vu = phenotype_similarity(enc[v], enc[u]);
      CHECK(std::memcmp(&s_uv, &s_vu, sizeof(Scalar)) == 0);
      CHECK(s_uv >= 0.0);
      CHECK(s_uv <= 1.0);
    }
  }
}

TEST_CASE("an all-identical cohort builds the complete graph") {
  std::vector<PhenotypeRecord> cohort;
  for (int i = 0; i < 6; ++i) {
    cohort.push_back(make_record("s" + std::to_string(i), 12.0, Gender::female,
                                 "SITE"));
  }
  const auto pg = build_population_graph(cohort, 0.5);
  CHECK(pg.adj.node_count() == 6);
  CHECK(pg.adj.edge_count() == 15);  // C(6,2)
  for (Index i = 0; i < 6; ++i) CHECK(pg.adj.at(i, i) == 0.0);
}

TEST_CASE("threshold 1.0 yields an empty graph (strict inequality)") {
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 12.0, Gender::female, "S"),
      make_record("b", 12.0, Gender::female, "S"),
  };
  const auto pg = build_population_graph(cohort, 1.0);
  CHECK(pg.adj.edge_count() == 0);
}

TEST_CASE("edges shrink monotonically as the threshold grows") {
  RngStream rng(42);
  const auto cohort = random_cohort(40, rng);
  const auto loose = build_population_graph(cohort, 0.3);
  const auto base = build_population_graph(cohort, 0.5);
  const auto tight = build_population_graph(cohort, 0.8);
  CHECK(base.adj.edge_count() <= loose.adj.edge_count());
  CHECK(tight.adj.edge_count() <= base.adj.edge_count());
  for (const auto& [key, w] : tight.adj.entries()) {
    CHECK(base.adj.at(key.first, key.second) == w);
  }
  for (const auto& [key, w] : base.adj.entries()) {
    CHECK(loose.adj.at(key.first, key.second) == w);
  }
}

TEST_CASE("a full-size cohort builds a graph with one node per subject") {
  RngStream rng(43);
  const auto cohort = random_cohort(871, rng);
  const auto pg = build_population_graph(cohort);
  CHECK(pg.adj.node_count() == 871);
  // Symmetry plus zero diagonal.
  for (const auto& [key, w] : pg.adj.entries()) {
    CHECK(key.first != key.second);
    CHECK(pg.adj.at(key.second, key.first) == w);
    CHECK(w == 1.0);
  }
}

TEST_CASE("phenotype CSV round-trips and validates") {
  const auto dir = std::filesystem::temp_directory_path() / "nptest_pheno";
  std::filesystem::create_directories(dir);
  const auto path = dir / "phenotypes.csv";

  std::vector<PhenotypeRecord> cohort = {
      make_record("s0", 6.5, Gender::male, "NYU"),
      make_record("s1", 58.0, Gender::female, "UCLA"),
  };
  cohort[0].handedness = "right";
  cohort[0].dx_group = 1;
  cohort[1].dx_group = 0;
  write_phenotype_csv(path, cohort);

  const auto back = read_phenotype_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].subject_id == "s0");
  CHECK(back[0].age == 6.5);
  CHECK(back[0].gender == Gender::male);
  CHECK(back[0].handedness == std::optional<std::string>("right"));
  CHECK(back[0].dx_group == std::optional<int>(1));
  CHECK(back[1].handedness == std::nullopt);
  CHECK(back[1].dx_group == std::optional<int>(0));

  // Header is mandatory.
  std::ofstream bad(dir / "bad.csv");
  bad << "s0,6.5,male,,NYU,ASD\n";
  bad.close();
  CHECK_THROWS_AS(read_phenotype_csv(dir / "bad.csv"), DataError);

  // Bad age is a structured error.
  std::ofstream bad2(dir / "bad2.csv");
  bad2 << "subject_id,age,gender,site,handedness,dx_group\n";
  bad2 << "s0,very old,male,NYU,,ASD\n";
  bad2.close();
  CHECK_THROWS_WITH_AS(read_phenotype_csv(dir / "bad2.csv"),
                       doctest::Contains("bad age"), DataError);

  // Numeric gender and dx codes (1 = male / case, 2 = female / control).
  std::ofstream abide(dir / "abide.csv");
  abide << "subject_id,age,gender,site,handedness,dx_group\n";
  abide << "s9,21.0,2,PITT,,2\n";
  abide.close();
  const auto coded = read_phenotype_csv(dir / "abide.csv");
  CHECK(coded[0].gender == Gender::female);
  CHECK(coded[0].dx_group == std::optional<int>(0));

  std::filesystem::remove_all(dir);
}

TEST_CASE("population graph needs at least two subjects") {
  std::vector<PhenotypeRecord> cohort = {
      make_record("a", 12.0, Gender::female, "S")};
  CHECK_THROWS_AS(build_population_graph(cohort), DataError);
}
