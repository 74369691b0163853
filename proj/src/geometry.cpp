// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace pf {

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> coords, std::size_t stride,
                                                 StartPolicy start, Rng* rng) {
  const std::size_t n = coords.size();
  if (n == 0) throw Error("farthest_point_sampling: empty input");
  if (stride == 0) throw Error("farthest_point_sampling: stride must be >= 1");
  const std::size_t m = std::max<std::size_t>(1, n / stride);

  std::size_t first = 0;
  if (start == StartPolicy::Random) {
    if (rng == nullptr) throw Error("farthest_point_sampling: random start needs a random stream");
    first = std::uniform_int_distribution<std::size_t>(0, n - 1)(*rng);
  }

  std::vector<std::size_t> out;
  out.reserve(m);
  out.push_back(first);
  std::vector<float> min_d2(n, std::numeric_limits<float>::infinity());
  std::size_t last = first;
  for (std::size_t j = 1; j < m; ++j) {
    // Chosen points keep a negative distance so duplicates cannot repeat them.
    min_d2[last] = -1.0f;
    const Vec3 c = coords[last];
    std::size_t best = 0;
    float best_d = -1.0f;
    for (std::size_t i = 0; i < n; ++i) {
      const float d = squared_distance(coords[i], c);
      if (d < min_d2[i]) min_d2[i] = d;
      if (min_d2[i] > best_d) {
        best_d = min_d2[i];
        best = i;
      }
    }
    out.push_back(best);
    last = best;
  }
  return out;
}

namespace {

struct KeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(k.x));
    h = splitmix64(h ^ static_cast<std::uint64_t>(k.y));
    return static_cast<std::size_t>(splitmix64(h ^ static_cast<std::uint64_t>(k.z)));
  }
};

// Fills the neighbor rows for arbitrary query positions.
void ball_rows(std::span<const Vec3> coords, std::span<const Vec3> queries, float radius, std::size_t k,
               bool use_grid, NeighborIndex& out) {
  const float r2 = radius * radius;
  const std::size_t m = queries.size();
  out.neighbors_per_centroid = k;
  out.neighbor_indices.assign(m * k, 0);
  out.neighbor_offsets.assign(m * k, Vec3{});

  auto fill_row = [&](std::size_t q, std::span<const std::size_t> found) {
    if (found.empty()) {
      throw Error("ball_query: no source point within radius of query " + std::to_string(q));
    }
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t idx = s < found.size() ? found[s] : found[0];
      out.neighbor_indices[q * k + s] = idx;
      const Vec3& p = coords[idx];
      out.neighbor_offsets[q * k + s] = {p[0] - queries[q][0], p[1] - queries[q][1], p[2] - queries[q][2]};
    }
  };

  std::vector<std::size_t> found;
  found.reserve(k);
  if (!use_grid) {
    for (std::size_t q = 0; q < m; ++q) {
      found.clear();
      for (std::size_t i = 0; i < coords.size() && found.size() < k; ++i) {
        if (squared_distance(coords[i], queries[q]) <= r2) found.push_back(i);
      }
      fill_row(q, found);
    }
    return;
  }

  // Uniform grid with cell edge slightly above the radius: all neighbors lie
  // in the 27 surrounding cells. Candidates are sorted so the result is
  // identical to the exhaustive ascending scan.
  const float cell = radius * 1.001f;
  std::unordered_map<VoxelKey, std::vector<std::size_t>, KeyHash> cells;
  for (std::size_t i = 0; i < coords.size(); ++i) cells[voxel_key(coords[i], cell)].push_back(i);
  std::vector<std::size_t> candidates;
  for (std::size_t q = 0; q < m; ++q) {
    candidates.clear();
    const VoxelKey c = voxel_key(queries[q], cell);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells.find(VoxelKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == cells.end()) continue;
          for (std::size_t i : it->second) {
            if (squared_distance(coords[i], queries[q]) <= r2) candidates.push_back(i);
          }
        }
      }
    }
    std::sort(candidates.begin(), candidates.end());
    found.assign(candidates.begin(), candidates.begin() + std::min(k, candidates.size()));
    fill_row(q, found);
  }
}

}  // namespace

NeighborIndex ball_query(std::span<const Vec3> coords, std::span<const std::size_t> centroid_indices,
                         float radius, std::size_t k, SearchMethod method) {
  if (!(radius > 0.0f)) throw Error("ball_query: radius must be positive");
  if (k == 0) throw Error("ball_query: K must be >= 1");
  std::vector<Vec3> queries;
  queries.reserve(centroid_indices.size());
  for (std::size_t c : centroid_indices) {
    if (c >= coords.size()) throw Error("ball_query: centroid index out of range");
    queries.push_back(coords[c]);
  }
  NeighborIndex out;
  out.centroid_indices.assign(centroid_indices.begin(), centroid_indices.end());
  bool use_grid = method == SearchMethod::Grid;
  if (method == SearchMethod::Auto) use_grid = coords.size() * queries.size() > (std::size_t{1} << 18);
  ball_rows(coords, queries, radius, k, use_grid, out);
  return out;
}

NeighborIndex ball_query_points(std::span<const Vec3> coords, std::span<const Vec3> queries, float radius,
                                std::size_t k, SearchMethod method) {
  if (!(radius > 0.0f)) throw Error("ball_query: radius must be positive");
  if (k == 0) throw Error("ball_query: K must be >= 1");
  NeighborIndex out;
  bool use_grid = method == SearchMethod::Grid;
  if (method == SearchMethod::Auto) use_grid = coords.size() * queries.size() > (std::size_t{1} << 18);
  ball_rows(coords, queries, radius, k, use_grid, out);
  return out;
}

namespace {
constexpr std::size_t kSmallK = 16;
}  // namespace

KnnResult knn(std::span<const Vec3> coords, std::span<const Vec3> queries, std::size_t k) {
  const std::size_t n = coords.size();
  if (n == 0) throw Error("knn: empty source");
  if (k == 0 || k > n) throw Error("knn: k must be in [1, n]");
  KnnResult out;
  out.k = k;
  out.indices.resize(queries.size() * k);
  out.distances.resize(queries.size() * k);
  using Entry = std::pair<float, std::size_t>;
  std::vector<Entry> scratch;
  scratch.reserve(k <= kSmallK ? k + 1 : n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    scratch.clear();
    if (k <= kSmallK) {
      // Bounded insertion; scanning in index order keeps equal distances
      // ordered by index because insertion goes after equal keys.
      for (std::size_t i = 0; i < n; ++i) {
        const float d = squared_distance(coords[i], queries[q]);
        if (scratch.size() == k && !(d < scratch.back().first)) continue;
        auto pos = std::upper_bound(scratch.begin(), scratch.end(), d,
                                    [](float v, const Entry& e) { return v < e.first; });
        scratch.insert(pos, {d, i});
        if (scratch.size() > k) scratch.pop_back();
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) scratch.emplace_back(squared_distance(coords[i], queries[q]), i);
      std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    }
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[q * k + j] = scratch[j].second;
      out.distances[q * k + j] = std::sqrt(scratch[j].first);
    }
  }
  return out;
}

VoxelKey voxel_key(const Vec3& p, float voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p[0] / voxel_size)),
          static_cast<std::int64_t>(std::floor(p[1] / voxel_size)),
          static_cast<std::int64_t>(std::floor(p[2] / voxel_size))};
}

VoxelGrid build_voxel_grid(std::span<const Vec3> coords, float voxel_size) {
  if (!(voxel_size > 0.0f) || !std::isfinite(voxel_size)) {
    throw Error("build_voxel_grid: voxel size must be positive");
  }
  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.num_points = coords.size();
  std::unordered_map<VoxelKey, std::size_t, KeyHash> lookup;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Vec3& p = coords[i];
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw Error("build_voxel_grid: non-finite coordinate at point " + std::to_string(i));
    }
    const VoxelKey key = voxel_key(p, voxel_size);
    auto [it, inserted] = lookup.try_emplace(key, grid.cells.size());
    if (inserted) grid.cells.push_back(VoxelCell{key, {}});
    grid.cells[it->second].members.push_back(i);
  }
  for (const auto& c : grid.cells) grid.max_occupancy = std::max(grid.max_occupancy, c.members.size());
  return grid;
}

std::vector<std::size_t> sample_train_subcloud(const VoxelGrid& grid, std::size_t sample_size, Rng& rng) {
  if (grid.cells.empty()) throw Error("sample_train_subcloud: empty grid");
  if (sample_size == 0) throw Error("sample_train_subcloud: sample size must be >= 1");
  std::vector<std::size_t> picks;
  picks.reserve(std::max(sample_size, grid.cells.size()));
  for (const auto& cell : grid.cells) {
    std::uniform_int_distribution<std::size_t> pick(0, cell.members.size() - 1);
    picks.push_back(cell.members[pick(rng)]);
  }
  if (picks.size() > sample_size) {
    // Partial Fisher-Yates: the first sample_size slots become a uniform
    // subset without replacement.
    for (std::size_t i = 0; i < sample_size; ++i) {
      std::uniform_int_distribution<std::size_t> j(i, picks.size() - 1);
      std::swap(picks[i], picks[j(rng)]);
    }
    picks.resize(sample_size);
  } else if (picks.size() < sample_size) {
    const std::size_t base = picks.size();
    std::uniform_int_distribution<std::size_t> j(0, base - 1);
    while (picks.size() < sample_size) picks.push_back(picks[j(rng)]);
  }
  return picks;
}

std::vector<std::vector<std::size_t>> enumerate_test_subclouds(const VoxelGrid& grid) {
  if (grid.cells.empty()) throw Error("enumerate_test_subclouds: empty grid");
  std::vector<std::vector<std::size_t>> out(grid.max_occupancy);
  for (std::size_t t = 0; t < grid.max_occupancy; ++t) {
    out[t].reserve(grid.cells.size());
    for (const auto& cell : grid.cells) out[t].push_back(cell.members[t % cell.members.size()]);
  }
  return out;
}

InterpolationWeights inverse_distance_weights(std::span<const Vec3> sources, std::span<const Vec3> targets,
                                              std::size_t k, double eps) {
  if (sources.empty()) throw Error("inverse_distance_interpolate: empty source");
  if (!(eps > 0.0)) throw Error("inverse_distance_interpolate: eps must be positive");
  const KnnResult nn = knn(sources, targets, k);
  InterpolationWeights w;
  w.k = k;
  w.indices = nn.indices;
  w.weights.resize(nn.distances.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double wj = 1.0 / (static_cast<double>(nn.distances[t * k + j]) + eps);
      w.weights[t * k + j] = wj;
      total += wj;
    }
    for (std::size_t j = 0; j < k; ++j) w.weights[t * k + j] /= total;
  }
  return w;
}

std::vector<float> inverse_distance_interpolate(std::span<const Vec3> sources, std::span<const float> features,
                                                std::size_t channels, std::span<const Vec3> targets,
                                                std::size_t k, double eps) {
  if (features.size() != sources.size() * channels) {
    throw Error("inverse_distance_interpolate: feature size does not match sources x channels");
  }
  const InterpolationWeights w = inverse_distance_weights(sources, targets, k, eps);
  std::vector<float> out(targets.size() * channels, 0.0f);
  std::vector<double> acc(channels);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double wj = w.weights[t * k + j];
      const float* f = features.data() + w.indices[t * k + j] * channels;
      for (std::size_t c = 0; c < channels; ++c) acc[c] += wj * f[c];
    }
    for (std::size_t c = 0; c < channels; ++c) out[t * channels + c] = static_cast<float>(acc[c]);
  }
  return out;
}

}  // namespace pf
