// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pointforge/point_cloud.hpp"
#include "pointforge/ulip.hpp"

namespace pf {

enum class RoofKind { Flat, Gable, Dome };

struct TypeRule {
  std::string type_name;       // entry of the building-type vocabulary
  std::string building_class;  // uppercase name prefix
  RoofKind roof = RoofKind::Flat;
  bool tower = false;
  float aspect_lo = 1.0f, aspect_hi = 1.5f;  // footprint length / depth
  float height_lo = 0.5f, height_hi = 0.8f;  // wall height / footprint depth
  float roof_rise = 0.4f;                     // gable rise / depth
  int window_rows = 1;
};

struct GeneratorSpec {
  std::vector<TypeRule> types;
  std::vector<std::string> parts{"wall", "window", "roof", "door", "tower", "ground"};
  std::size_t points_per_building = 4096;
  float noise_sigma = 0.002f;
  float color_noise = 0.04f;
  float unspecified_fraction = 0.0f;
  Axis up_axis = Axis::Y;
  std::uint64_t seed = 0;

  /// house, church, office building and mosque.
  static GeneratorSpec default_spec();
  void validate() const;
};

/// Per-building bookkeeping kept alongside the point cloud.
struct BuildingRecord {
  PointCloud cloud;
  std::size_t type_position = 0;  // index into GeneratorSpec::types
  float eave_height = 0.0f;       // wall/roof junction, normalized units
  float ground_top = 0.0f;        // highest ground point, normalized units
  std::vector<std::uint64_t> part_counts;  // indexed by part-vocabulary label
};

/// Samples one building. Coordinates fit in [-0.5, 0.5]^3 with the ground
/// at the bottom of the up axis; normals are analytic.
BuildingRecord generate_building(const GeneratorSpec& spec, std::size_t type_position, Rng& rng,
                                 std::size_t mesh_id = 0);

struct SplitCounts {
  std::size_t train = 8, val = 2, test = 2;
};

struct DatasetInfo {
  std::filesystem::path root;
  std::array<DatasetSplit, 3> splits;                  // train, val, test
  std::array<std::vector<std::uint64_t>, 3> part_counts;  // per split, by part label
  std::array<std::vector<std::uint64_t>, 3> type_counts;  // per split, by type label
};

/// Writes <root>/<split>/<name>.pcloud (+ .meta) and <root>/<split>.txt.
/// Types cycle through the generator types so every split is balanced.
DatasetInfo generate_dataset(const GeneratorSpec& spec, const SplitCounts& counts, const std::filesystem::path& root);

struct EmbeddingSpec {
  std::size_t dim = 32;
  double separation = 4.0;
  double jitter = 0.3;
  std::size_t text_rows = 64;
  std::size_t image_rows = 16;
  std::uint64_t seed = 0;
};

/// Class means are normalize(shared + separation * u_c) for random unit u_c;
/// separation 0 makes every class look alike. Rows are mean plus Gaussian
/// jitter, normalized. Writes <root>/embeddings/<name>.pfemb for every
/// manifest entry, <root>/class_prompts.pfcls and <root>/embeddings.txt.
/// Returns the class prompts.
ClassPrompts generate_embeddings(const GeneratorSpec& spec, const EmbeddingSpec& emb, const std::filesystem::path& root);

/// Path of the embedding file for a cloud name.
std::filesystem::path embedding_path(const std::filesystem::path& root, const std::string& name);

}  // namespace pf
