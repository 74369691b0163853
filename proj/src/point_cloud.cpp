// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/point_cloud.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace pf {

Axis parse_axis(std::string_view text) {
  if (text == "x" || text == "X") return Axis::X;
  if (text == "y" || text == "Y") return Axis::Y;
  if (text == "z" || text == "Z") return Axis::Z;
  throw ParseError("invalid axis '" + std::string(text) + "' (expected x, y or z)");
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

namespace {

bool finite3(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

template <class Column>
void check_length(const std::optional<Column>& column, std::size_t n, const char* what) {
  if (column && column->size() != n) {
    throw FormatError(std::string(what) + " has " + std::to_string(column->size()) +
                      " entries, expected " + std::to_string(n));
  }
}

}  // namespace

void PointCloud::validate() const {
  const std::size_t n = coords.size();
  if (n == 0) throw FormatError("point cloud '" + name + "' is empty");
  check_length(normals, n, "normals");
  check_length(colors, n, "colors");
  check_length(heights, n, "heights");
  check_length(seg_labels, n, "seg_labels");
  for (std::size_t i = 0; i < n; ++i) {
    if (!finite3(coords[i])) throw FormatError("non-finite coordinate at point " + std::to_string(i));
  }
  if (colors) {
    for (std::size_t i = 0; i < n; ++i) {
      for (float c : (*colors)[i]) {
        if (!(c >= 0.0f && c <= 1.0f)) {
          throw FormatError("color outside [0,1] at point " + std::to_string(i));
        }
      }
    }
  }
  if (heights) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!((*heights)[i] >= 0.0f)) throw FormatError("negative height at point " + std::to_string(i));
    }
  }
  if (seg_labels) {
    for (std::size_t i = 0; i < n; ++i) {
      const int s = (*seg_labels)[i];
      if (s < 0 || s >= kNumPartLabels) {
        throw FormatError("segmentation label " + std::to_string(s) + " out of range at point " +
                          std::to_string(i));
      }
    }
  }
  if (type_label && (*type_label < 0 || *type_label >= kNumBuildingTypes)) {
    throw FormatError("type label " + std::to_string(*type_label) + " out of range");
  }
}

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.name = name;
  out.type_label = type_label;
  auto pick = [&](const auto& column) {
    using Col = std::decay_t<decltype(*column)>;
    std::optional<Col> result;
    if (column) {
      result.emplace();
      result->reserve(indices.size());
      for (std::size_t i : indices) result->push_back((*column)[i]);
    }
    return result;
  };
  out.coords.reserve(indices.size());
  for (std::size_t i : indices) out.coords.push_back(coords.at(i));
  out.normals = pick(normals);
  out.colors = pick(colors);
  out.heights = pick(heights);
  out.seg_labels = pick(seg_labels);
  return out;
}

LabelVocabulary::LabelVocabulary(std::vector<std::string> names, std::optional<int> ignore_index)
    : names_(std::move(names)), ignore_index_(ignore_index) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw Error("label vocabulary contains an empty name");
    if (!seen.insert(n).second) throw Error("duplicate label name '" + n + "'");
  }
  if (ignore_index_ && (*ignore_index_ < 0 || *ignore_index_ >= static_cast<int>(names_.size()))) {
    throw Error("ignore_index " + std::to_string(*ignore_index_) + " outside vocabulary");
  }
}

LabelVocabulary LabelVocabulary::building_types() {
  return LabelVocabulary({"castle", "cathedral", "church", "city hall", "factory", "hotel building",
                          "house", "monastery", "mosque", "museum", "office building", "palace",
                          "school building", "temple", "villa"});
}

LabelVocabulary LabelVocabulary::building_parts() {
  return LabelVocabulary(
      {"unspecified", "wall",     "window",  "vehicle",  "roof",    "plant",   "door",
       "tower",       "furniture", "ground", "beam",     "stairs",  "column",  "banister",
       "floor",       "chimney",  "ceiling", "fence",    "pool",    "corridor", "balcony",
       "garage",      "dome",     "road",    "gate",     "parapet", "buttress", "dormer",
       "lighting",    "arch",     "awning",  "shutters"},
      kUnspecifiedLabel);
}

const std::string& LabelVocabulary::name(int index) const {
  if (index < 0 || index >= static_cast<int>(names_.size())) {
    throw Error("label index " + std::to_string(index) + " outside vocabulary");
  }
  return names_[static_cast<std::size_t>(index)];
}

std::optional<int> LabelVocabulary::find(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int LabelVocabulary::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw Error("unknown label '" + std::string(name) + "'");
}

SplitName parse_split_name(std::string_view text) {
  if (text == "train") return SplitName::Train;
  if (text == "val") return SplitName::Val;
  if (text == "test") return SplitName::Test;
  throw ParseError("invalid split name '" + std::string(text) + "'");
}

std::string_view split_name_str(SplitName split) {
  switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Val: return "val";
    case SplitName::Test: return "test";
  }
  return "?";
}

DatasetSplit load_split_manifest(const std::filesystem::path& manifest, SplitName split) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open split manifest " + manifest.string());
  DatasetSplit out;
  out.split = split;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::filesystem::path p(line);
    if (p.is_relative()) p = manifest.parent_path() / p;
    out.entries.push_back(p);
  }
  if (out.entries.empty()) throw FormatError("split manifest " + manifest.string() + " is empty");
  return out;
}

void save_split_manifest(const std::filesystem::path& manifest, const DatasetSplit& split) {
  std::ofstream out(manifest);
  if (!out) throw Error("cannot write split manifest " + manifest.string());
  for (const auto& e : split.entries) out << e.generic_string() << '\n';
  if (!out) throw Error("write failed for " + manifest.string());
}

BuildingName parse_building_name(std::string_view name) {
  std::size_t i = 0;
  while (i < name.size() && name[i] >= 'A' && name[i] <= 'Z') ++i;
  if (i == 0) throw ParseError("building name '" + std::string(name) + "' has no uppercase class prefix");
  std::size_t j = i;
  while (j < name.size() && ((name[j] >= 'a' && name[j] <= 'z') || name[j] == '_')) ++j;
  std::string_view run = name.substr(i, j - i);
  if (auto mesh = run.rfind("_mesh"); mesh != std::string_view::npos) run = run.substr(0, mesh);
  if (run.empty() || run.front() == '_') {
    throw ParseError("building name '" + std::string(name) + "' has no lowercase subclass");
  }
  BuildingName out;
  out.building_class = std::string(name.substr(0, i));
  out.subclass = std::string(run);
  std::replace(out.subclass.begin(), out.subclass.end(), '_', ' ');
  return out;
}

namespace {

enum class Column { X, Y, Z, NX, NY, NZ, R, G, B, Seg };

Column parse_column(std::string_view s) {
  static constexpr std::pair<std::string_view, Column> table[] = {
      {"x", Column::X},   {"y", Column::Y},   {"z", Column::Z}, {"nx", Column::NX},
      {"ny", Column::NY}, {"nz", Column::NZ}, {"r", Column::R}, {"g", Column::G},
      {"b", Column::B},   {"seg", Column::Seg}};
  for (const auto& [key, col] : table) {
    if (key == s) return col;
  }
  throw FormatError("unknown column '" + std::string(s) + "'");
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

float parse_float(std::string_view tok, std::size_t row) {
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("row " + std::to_string(row) + ": cannot parse '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw FormatError("row " + std::to_string(row) + ": non-finite value");
  return v;
}

void append_float(std::string& out, float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".meta");
  return p;
}

}  // namespace

PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open point cloud " + path.string());
  std::string header;
  std::getline(in, header);
  auto head = split_ws(header);
  if (head.size() != 4 || head[0] != "PCLOUD" || head[1] != "v1" || head[2].substr(0, 2) != "n=" ||
      head[3].substr(0, 5) != "cols=") {
    throw FormatError(path.string() + ": bad header '" + header + "'");
  }
  std::size_t n = 0;
  {
    auto s = head[2].substr(2);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(path.string() + ": bad n");
  }
  std::vector<Column> cols;
  {
    auto s = head[3].substr(5);
    std::size_t start = 0;
    while (start <= s.size()) {
      auto comma = s.find(',', start);
      if (comma == std::string_view::npos) comma = s.size();
      cols.push_back(parse_column(s.substr(start, comma - start)));
      start = comma + 1;
    }
  }
  auto has = [&](Column c) { return std::find(cols.begin(), cols.end(), c) != cols.end(); };
  auto has_all = [&](Column a, Column b, Column c) {
    const int k = int(has(a)) + int(has(b)) + int(has(c));
    if (k != 0 && k != 3) throw FormatError(path.string() + ": partial vector column group");
    return k == 3;
  };
  if (!has_all(Column::X, Column::Y, Column::Z)) throw FormatError(path.string() + ": missing x,y,z");
  if (n == 0) throw FormatError(path.string() + ": n must be positive");

  PointCloud cloud;
  cloud.coords.assign(n, Vec3{});
  if (has_all(Column::NX, Column::NY, Column::NZ)) cloud.normals.emplace(n, Vec3{});
  if (has_all(Column::R, Column::G, Column::B)) cloud.colors.emplace(n, Vec3{});
  if (has(Column::Seg)) cloud.seg_labels.emplace(n, 0);

  std::string line;
  for (std::size_t row = 0; row < n; ++row) {
    if (!std::getline(in, line)) {
      throw FormatError(path.string() + ": expected " + std::to_string(n) + " rows, got " +
                        std::to_string(row));
    }
    auto toks = split_ws(line);
    if (toks.size() != cols.size()) {
      throw FormatError(path.string() + ": row " + std::to_string(row + 1) + " has " +
                        std::to_string(toks.size()) + " values, expected " + std::to_string(cols.size()));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto col = cols[c];
      if (col == Column::Seg) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(toks[c].data(), toks[c].data() + toks[c].size(), v);
        if (ec != std::errc() || ptr != toks[c].data() + toks[c].size()) {
          throw FormatError(path.string() + ": row " + std::to_string(row + 1) + ": bad label");
        }
        (*cloud.seg_labels)[row] = v;
        continue;
      }
      const float v = parse_float(toks[c], row + 1);
      const int k = static_cast<int>(col);
      if (k <= 2) cloud.coords[row][k] = v;
      else if (k <= 5) (*cloud.normals)[row][k - 3] = v;
      else (*cloud.colors)[row][k - 6] = v;
    }
  }
  while (std::getline(in, line)) {
    if (!split_ws(line).empty()) throw FormatError(path.string() + ": more rows than declared");
  }

  cloud.name = path.stem().string();
  if (auto mp = meta_path(path); std::filesystem::exists(mp)) {
    std::ifstream meta(mp);
    while (std::getline(meta, line)) {
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError(mp.string() + ": expected key=value");
      auto key = line.substr(0, eq);
      auto value = line.substr(eq + 1);
      if (key == "name") {
        cloud.name = value;
      } else if (key == "type_label") {
        int v = 0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc()) throw FormatError(mp.string() + ": bad type_label");
        cloud.type_label = v;
      } else {
        throw FormatError(mp.string() + ": unknown key '" + key + "'");
      }
    }
  }
  try {
    cloud.validate();
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return cloud;
}

void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  cloud.validate();
  std::string cols = "x,y,z";
  if (cloud.normals) cols += ",nx,ny,nz";
  if (cloud.colors) cols += ",r,g,b";
  if (cloud.seg_labels) cols += ",seg";
  std::string body;
  body.reserve(cloud.size() * 96);
  body += "PCLOUD v1 n=" + std::to_string(cloud.size()) + " cols=" + cols + "\n";
  auto put3 = [&](const Vec3& v) {
    for (float f : v) {
      body += ' ';
      append_float(body, f);
    }
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.coords[i];
    append_float(body, p[0]);
    body += ' ';
    append_float(body, p[1]);
    body += ' ';
    append_float(body, p[2]);
    if (cloud.normals) put3((*cloud.normals)[i]);
    if (cloud.colors) put3((*cloud.colors)[i]);
    if (cloud.seg_labels) body += ' ' + std::to_string((*cloud.seg_labels)[i]);
    body += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write point cloud " + path.string());
  out << body;
  std::ofstream meta(meta_path(path), std::ios::binary);
  meta << "name=" << cloud.name << '\n';
  if (cloud.type_label) meta << "type_label=" << *cloud.type_label << '\n';
  if (!out || !meta) throw Error("write failed for " + path.string());
}

PointCloud compute_heights(const PointCloud& cloud, Axis up_axis) {
  if (cloud.coords.empty()) throw Error("compute_heights: empty point cloud");
  const int a = static_cast<int>(up_axis);
  float lo = std::numeric_limits<float>::infinity();
  for (const auto& p : cloud.coords) lo = std::min(lo, p[a]);
  PointCloud out = cloud;
  out.heights.emplace(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) (*out.heights)[i] = cloud.coords[i][a] - lo;
  return out;
}

std::uint64_t LabelHistogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

LabelHistogram label_histogram(std::span<const PointCloud> clouds, const LabelVocabulary& vocab,
                               LabelKind kind) {
  LabelHistogram h;
  h.counts.assign(vocab.size(), 0);
  const int nclass = static_cast<int>(vocab.size());
  auto add = [&](int label, const PointCloud& cloud) {
    if (label < 0 || label >= nclass) {
      throw Error("label " + std::to_string(label) + " outside vocabulary in '" + cloud.name + "'");
    }
    if (vocab.ignore_index() && label == *vocab.ignore_index()) {
      ++h.ignored;
    } else {
      ++h.counts[static_cast<std::size_t>(label)];
    }
  };
  for (const auto& cloud : clouds) {
    if (kind == LabelKind::Segmentation) {
      if (!cloud.seg_labels) throw Error("cloud '" + cloud.name + "' has no segmentation labels");
      for (int s : *cloud.seg_labels) add(s, cloud);
    } else {
      if (!cloud.type_label) throw Error("cloud '" + cloud.name + "' has no type label");
      add(*cloud.type_label, cloud);
    }
  }
  return h;
}

LabelHistogram label_histogram(const DatasetSplit& split, const LabelVocabulary& vocab,
                               LabelKind kind) {
  std::vector<PointCloud> clouds;
  clouds.reserve(split.entries.size());
  for (const auto& e : split.entries) clouds.push_back(load_point_cloud(e));
  return label_histogram(clouds, vocab, kind);
}

}  // namespace pf
