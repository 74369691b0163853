// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pointforge/point_cloud.hpp"

namespace pf {

struct VoxelStat {
  std::string name;
  std::string split;
  std::size_t points = 0;
  std::size_t voxels = 0;
  std::size_t max_occupancy = 0;
};

std::vector<VoxelStat> voxel_stats(std::span<const PointCloud> clouds, const std::string& split, float voxel_size);

// "name,split,points,voxels,max_occupancy"
void write_voxel_stats(const std::filesystem::path& path, std::span<const VoxelStat> stats);
// "index,label,count"
void write_label_histogram(const std::filesystem::path& path, const LabelHistogram& hist, const LabelVocabulary& vocab);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws when absent.
  std::size_t column(const std::string& name) const;
};

/// Plain comma-separated values without quoting.
CsvTable read_csv(const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> x, y;  // NaN y values leave gaps
};

std::string svg_line_chart(const std::string& title, const std::string& x_label, std::span<const Series> series);
std::string svg_bar_chart(const std::string& title, std::span<const std::string> labels, std::span<const double> values);

/// Chart for a history, voxel-stats or label-histogram CSV, chosen by its
/// header. The source rows are embedded as an XML comment.
std::string plot_csv(const std::filesystem::path& csv);

}  // namespace pf
