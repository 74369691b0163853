// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "pointforge/point_cloud.hpp"
#include "pointforge/synthetic.hpp"
#include "test_util.hpp"

using namespace pf;
using pf::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("building names split at the case boundary") {
  CHECK(parse_building_name("COMMERCIALcastle_mesh0365") == BuildingName{"COMMERCIAL", "castle"});
  CHECK(parse_building_name("Xy") == BuildingName{"X", "y"});
  CHECK(parse_building_name("RELIGIOUSchurch_mesh0001") == BuildingName{"RELIGIOUS", "church"});
  CHECK(parse_building_name("COMMERCIALoffice_building_mesh0002").subclass == "office building");
  CHECK_THROWS_AS(parse_building_name("castle_mesh0001"), ParseError);
  CHECK_THROWS_AS(parse_building_name("CASTLE"), ParseError);
}

TEST_CASE("building names round-trip for random classes and subclasses") {
  Rng rng(11);
  std::uniform_int_distribution<int> len(1, 8), upper('A', 'Z'), lower('a', 'z'), words(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::string cls, sub;
    for (int i = len(rng); i > 0; --i) cls += static_cast<char>(upper(rng));
    for (int w = words(rng); w > 0; --w) {
      if (!sub.empty()) sub += ' ';
      for (int i = len(rng); i > 0; --i) sub += static_cast<char>(lower(rng));
    }
    std::string underscored = sub;
    std::replace(underscored.begin(), underscored.end(), ' ', '_');
    const auto parsed = parse_building_name(cls + underscored + "_mesh" + std::to_string(trial));
    CHECK(parsed.building_class == cls);
    CHECK(parsed.subclass == sub);
  }
}

TEST_CASE("hand-written point cloud files load") {
  TempDir dir("core");
  const auto p = dir.path() / "a.pcloud";
  write_text(p,
             "PCLOUD v1 n=3 cols=x,y,z,nx,ny,nz,r,g,b,seg\n"
             "0 0 0 0 1 0 0.1 0.2 0.3 1\n"
             "1 0.5 0 0 1 0 0.4 0.5 0.6 4\n"
             "0 1 1 1 0 0 1 1 1 9\n");
  write_text(dir.path() / "a.meta", "name=RESIDENTIALhouse_mesh0001\ntype_label=6\n");
  const PointCloud c = load_point_cloud(p);
  CHECK(c.size() == 3);
  REQUIRE(c.normals);
  REQUIRE(c.colors);
  REQUIRE(c.seg_labels);
  CHECK((*c.seg_labels)[1] == 4);
  CHECK((*c.colors)[1][2] == doctest::Approx(0.6f));
  CHECK(c.type_label == 6);
  CHECK(c.name == "RESIDENTIALhouse_mesh0001");

  const auto q = dir.path() / "b.pcloud";
  write_text(q, "PCLOUD v1 n=2 cols=x,y,z\n0 0 0\n1 2 3\n");
  const PointCloud d = load_point_cloud(q);
  CHECK(d.size() == 2);
  CHECK_FALSE(d.normals);
  CHECK_FALSE(d.colors);
  CHECK_FALSE(d.seg_labels);
}

TEST_CASE("malformed point cloud files are rejected") {
  TempDir dir("core");
  const auto p = dir.path() / "bad.pcloud";
  const std::pair<const char*, const char*> cases[] = {
      {"rows short", "PCLOUD v1 n=3 cols=x,y,z\n0 0 0\n1 1 1\n"},
      {"rows long", "PCLOUD v1 n=1 cols=x,y,z\n0 0 0\n1 1 1\n"},
      {"partial normals", "PCLOUD v1 n=1 cols=x,y,z,nx\n0 0 0 1\n"},
      {"unknown column", "PCLOUD v1 n=1 cols=x,y,z,w\n0 0 0 1\n"},
      {"bad header", "PCLOUD v2 n=1 cols=x,y,z\n0 0 0\n"},
      {"label range", "PCLOUD v1 n=1 cols=x,y,z,seg\n0 0 0 40\n"},
      {"color range", "PCLOUD v1 n=1 cols=x,y,z,r,g,b\n0 0 0 2 0 0\n"},
      {"nan", "PCLOUD v1 n=1 cols=x,y,z\nnan 0 0\n"},
      {"missing z", "PCLOUD v1 n=1 cols=x,y\n0 0\n"},
  };
  for (const auto& [what, text] : cases) {
    CAPTURE(what);
    write_text(p, text);
    CHECK_THROWS_AS(load_point_cloud(p), FormatError);
  }
}

TEST_CASE("save then load preserves generated clouds") {
  TempDir dir("core");
  Rng rng(3);
  const auto spec = GeneratorSpec::default_spec();
  for (std::size_t t = 0; t < spec.types.size(); ++t) {
    const PointCloud c = generate_building(spec, t, rng, t + 1).cloud;
    const auto p = dir.path() / (c.name + ".pcloud");
    save_point_cloud(p, c);
    const PointCloud back = load_point_cloud(p);
    REQUIRE(back.size() == c.size());
    CHECK(back.coords == c.coords);
    CHECK(*back.normals == *c.normals);
    CHECK(*back.colors == *c.colors);
    CHECK(*back.seg_labels == *c.seg_labels);
    CHECK(back.type_label == c.type_label);
    CHECK(back.name == c.name);
  }
}

TEST_CASE("column invariants are enforced") {
  PointCloud c;
  c.coords = {{0, 0, 0}, {1, 1, 1}};
  c.seg_labels = std::vector<int>{1};
  CHECK_THROWS_AS(c.validate(), FormatError);
  c.seg_labels = std::vector<int>{1, 2};
  CHECK_NOTHROW(c.validate());
  c.type_label = 15;
  CHECK_THROWS_AS(c.validate(), FormatError);
}

TEST_CASE("heights subtract the lowest up coordinate") {
  PointCloud c;
  c.coords = {{0, 2, 0}, {0, 3, 0}, {0, 5, 0}};
  CHECK(*compute_heights(c).heights == std::vector<float>{0, 1, 3});
  c.coords = {{0, 1, 0}, {5, 1, 2}};
  CHECK(*compute_heights(c).heights == std::vector<float>{0, 0});
  c.coords = {{0, 0, 4}, {0, 0, 1}};
  CHECK(*compute_heights(c, Axis::Z).heights == std::vector<float>{3, 0});

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud r = compute_heights(pf::testing::random_cloud(200, rng));
    const auto& h = *r.heights;
    const auto hmin = std::min_element(h.begin(), h.end()) - h.begin();
    const auto ymin = std::min_element(r.coords.begin(), r.coords.end(),
                                       [](const Vec3& a, const Vec3& b) { return a[1] < b[1]; }) -
                      r.coords.begin();
    CHECK(hmin == ymin);
    CHECK(*compute_heights(r).heights == h);
  }
}

TEST_CASE("label histograms count labels per class") {
  const auto vocab = LabelVocabulary::building_parts();
  PointCloud a, b;
  a.coords.assign(8, Vec3{0, 0, 0});
  a.seg_labels = std::vector<int>{1, 1, 1, 1, 1, 2, 2, 2};
  b.coords.assign(3, Vec3{0, 0, 0});
  b.seg_labels = std::vector<int>{1, 1, 0};
  const std::vector<PointCloud> clouds{a, b};
  const auto h = label_histogram(clouds, vocab, LabelKind::Segmentation);
  CHECK(h.counts.size() == 32);
  CHECK(h.counts[1] == 7);
  CHECK(h.counts[2] == 3);
  CHECK(h.counts[5] == 0);
  CHECK(h.counts[0] == 0);
  CHECK(h.ignored == 1);
  CHECK(h.total() + h.ignored == 11);
}

TEST_CASE("split manifests round-trip and resolve relative paths") {
  TempDir dir("core");
  DatasetSplit s;
  s.split = SplitName::Val;
  s.entries = {dir.path() / "val" / "a.pcloud", dir.path() / "val" / "b.pcloud"};
  save_split_manifest(dir.path() / "val.txt", s);
  const DatasetSplit back = load_split_manifest(dir.path() / "val.txt", SplitName::Val);
  REQUIRE(back.entries.size() == 2);
  CHECK(std::filesystem::weakly_canonical(back.entries[1]) == std::filesystem::weakly_canonical(s.entries[1]));
  CHECK_THROWS(load_split_manifest(dir.path() / "missing.txt", SplitName::Val));
  CHECK_THROWS_AS(parse_split_name("holdout"), ParseError);
}

TEST_CASE("vocabularies") {
  const auto types = LabelVocabulary::building_types();
  CHECK(types.size() == 15);
  CHECK(std::is_sorted(types.names().begin(), types.names().end()));
  const auto parts = LabelVocabulary::building_parts();
  CHECK(parts.size() == 32);
  CHECK(parts.ignore_index() == 0);
  CHECK(parts.name(0) == "unspecified");
  CHECK(parts.index_of("roof") > 0);
  CHECK_THROWS(LabelVocabulary({"a", "a"}));
}
