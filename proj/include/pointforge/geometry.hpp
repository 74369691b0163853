// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pointforge/common.hpp"
#include "pointforge/point_cloud.hpp"

namespace pf {

enum class StartPolicy { Deterministic, Random };

/// Greedy farthest point sampling. Returns max(1, n / stride) distinct
/// indices; ties in the farthest distance go to the lowest index.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> coords, std::size_t stride,
                                                 StartPolicy start = StartPolicy::Deterministic,
                                                 Rng* rng = nullptr);

struct NeighborIndex {
  std::size_t neighbors_per_centroid = 0;   // K
  std::vector<std::size_t> centroid_indices;  // m
  std::vector<std::size_t> neighbor_indices;  // m * K, row-major
  std::vector<Vec3> neighbor_offsets;         // m * K, coord[neighbor] - coord[centroid]

  std::size_t num_centroids() const { return centroid_indices.size(); }
  std::size_t at(std::size_t centroid, std::size_t k) const {
    return neighbor_indices[centroid * neighbors_per_centroid + k];
  }
};

enum class SearchMethod { Auto, Exhaustive, Grid };

/// Up to K points within `radius` of each centroid, in ascending index
/// order. Short rows are padded with the first neighbor found. Every
/// centroid must be a member of `coords`, so rows are never empty.
NeighborIndex ball_query(std::span<const Vec3> coords, std::span<const std::size_t> centroid_indices,
                         float radius, std::size_t k, SearchMethod method = SearchMethod::Auto);

/// Ball query around arbitrary query positions; centroid_indices stays
/// empty. Throws when a query has no source point within the radius.
NeighborIndex ball_query_points(std::span<const Vec3> coords, std::span<const Vec3> queries, float radius,
                                std::size_t k, SearchMethod method = SearchMethod::Auto);

struct KnnResult {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // queries * k
  std::vector<float> distances;      // ascending per row
};

/// Exact k nearest neighbors; equal distances resolve to the lower index.
KnnResult knn(std::span<const Vec3> coords, std::span<const Vec3> queries, std::size_t k);

struct VoxelKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelCell {
  VoxelKey key;
  std::vector<std::size_t> members;  // ascending point indices
};

/// Cells appear in order of their lowest member index.
struct VoxelGrid {
  float voxel_size = 0.0f;
  std::vector<VoxelCell> cells;
  std::size_t max_occupancy = 0;
  std::size_t num_points = 0;
};

VoxelKey voxel_key(const Vec3& p, float voxel_size);
VoxelGrid build_voxel_grid(std::span<const Vec3> coords, float voxel_size);
inline VoxelGrid build_voxel_grid(const PointCloud& cloud, float voxel_size) {
  return build_voxel_grid(cloud.coords, voxel_size);
}

/// One random member per cell, then resized to exactly `sample_size`:
/// cells are subsampled without replacement, or the picks are padded by
/// drawing from themselves with replacement.
std::vector<std::size_t> sample_train_subcloud(const VoxelGrid& grid, std::size_t sample_size, Rng& rng);

/// max_occupancy sub-clouds; sub-cloud t takes member (t mod occupancy) of
/// every cell, so together they cover every point.
std::vector<std::vector<std::size_t>> enumerate_test_subclouds(const VoxelGrid& grid);

struct InterpolationWeights {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // targets * k
  std::vector<double> weights;       // normalized, non-negative, rows sum to 1
};

/// Inverse-distance weights w = 1 / (d + eps) over the k nearest sources.
InterpolationWeights inverse_distance_weights(std::span<const Vec3> sources, std::span<const Vec3> targets,
                                              std::size_t k, double eps = 1e-8);

/// Row-major features (sources x channels) interpolated onto targets.
std::vector<float> inverse_distance_interpolate(std::span<const Vec3> sources, std::span<const float> features,
                                                std::size_t channels, std::span<const Vec3> targets,
                                                std::size_t k, double eps = 1e-8);

}  // namespace pf
