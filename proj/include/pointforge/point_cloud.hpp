// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pointforge/common.hpp"

namespace pf {

/// A labeled point set. Attribute columns other than coords are optional,
/// but every present column has exactly coords.size() entries.
struct PointCloud {
  std::vector<Vec3> coords;
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<Vec3>> colors;
  std::optional<std::vector<float>> heights;
  std::optional<std::vector<int>> seg_labels;
  std::optional<int> type_label;
  std::string name;

  std::size_t size() const { return coords.size(); }

  /// Throws FormatError when a column length, value range or finiteness
  /// invariant does not hold.
  void validate() const;

  /// Copy of the selected rows (indices may repeat).
  PointCloud subset(std::span<const std::size_t> indices) const;
};

class LabelVocabulary {
 public:
  LabelVocabulary(std::vector<std::string> names, std::optional<int> ignore_index = std::nullopt);

  /// The 15 building subtypes, alphabetical.
  static LabelVocabulary building_types();
  /// "unspecified" followed by the 31 part classes; ignore_index = 0.
  static LabelVocabulary building_parts();

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::optional<int> ignore_index() const { return ignore_index_; }
  const std::string& name(int index) const;
  std::optional<int> find(std::string_view name) const;
  int index_of(std::string_view name) const;

 private:
  std::vector<std::string> names_;
  std::optional<int> ignore_index_;
};

enum class SplitName { Train, Val, Test };

SplitName parse_split_name(std::string_view text);
std::string_view split_name_str(SplitName split);

struct DatasetSplit {
  SplitName split = SplitName::Train;
  std::vector<std::filesystem::path> entries;
};

/// One path per line; relative paths resolve against the manifest directory.
DatasetSplit load_split_manifest(const std::filesystem::path& manifest, SplitName split);
void save_split_manifest(const std::filesystem::path& manifest, const DatasetSplit& split);

struct BuildingName {
  std::string building_class;
  std::string subclass;  // underscores mapped to spaces

  bool operator==(const BuildingName&) const = default;
};

/// "COMMERCIALcastle_mesh0365" -> {"COMMERCIAL", "castle"}.
BuildingName parse_building_name(std::string_view name);

/// Reads a PCLOUD v1 file and its optional ".meta" sidecar.
PointCloud load_point_cloud(const std::filesystem::path& path);
/// Writes every present column (heights are derived, never stored).
void save_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);

PointCloud compute_heights(const PointCloud& cloud, Axis up_axis = Axis::Y);

enum class LabelKind { Segmentation, Classification };

struct LabelHistogram {
  std::vector<std::uint64_t> counts;  // indexed by vocabulary index; ignored class stays 0
  std::uint64_t ignored = 0;

  std::uint64_t total() const;
};

LabelHistogram label_histogram(std::span<const PointCloud> clouds, const LabelVocabulary& vocab,
                               LabelKind kind);
LabelHistogram label_histogram(const DatasetSplit& split, const LabelVocabulary& vocab,
                               LabelKind kind);

}  // namespace pf
