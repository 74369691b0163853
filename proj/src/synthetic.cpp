// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace pf {

namespace {

using V = std::array<double, 3>;

V operator+(const V& a, const V& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
V operator*(double s, const V& a) { return {s * a[0], s * a[1], s * a[2]}; }
V cross(const V& a, const V& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const V& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }
V unit(const V& a) { return (1.0 / norm(a)) * a; }

struct Opening {
  double a0, a1, b0, b1;  // fractions along the two quad edges
  int label;
};

enum class SurfaceKind { Quad, Triangle, Hemisphere, Cylinder, Cone };

struct Surface {
  SurfaceKind kind = SurfaceKind::Quad;
  V p{}, u{}, v{};  // quad: origin + edges; triangle: three corners; round: base center
  double radius = 0.0, height = 0.0;
  V normal{};  // flat surfaces only
  int label = 0;
  std::vector<Opening> openings;

  double area() const {
    switch (kind) {
      case SurfaceKind::Quad: return norm(cross(u, v));
      case SurfaceKind::Triangle: return 0.5 * norm(cross(u + (-1.0 * p), v + (-1.0 * p)));
      case SurfaceKind::Hemisphere: return 2.0 * std::numbers::pi * radius * radius;
      case SurfaceKind::Cylinder: return 2.0 * std::numbers::pi * radius * height;
      case SurfaceKind::Cone: return std::numbers::pi * radius * std::hypot(radius, height);
    }
    return 0.0;
  }
};

struct Sample {
  V point, normal;
  int label;
};

Sample sample_surface(const Surface& s, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  switch (s.kind) {
    case SurfaceKind::Quad: {
      const double a = u01(rng), b = u01(rng);
      int label = s.label;
      for (const auto& o : s.openings) {
        if (a >= o.a0 && a <= o.a1 && b >= o.b0 && b <= o.b1) {
          label = o.label;
          break;
        }
      }
      return {s.p + a * s.u + b * s.v, s.normal, label};
    }
    case SurfaceKind::Triangle: {
      double a = u01(rng), b = u01(rng);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      const V q = s.p + a * (s.u + (-1.0 * s.p)) + b * (s.v + (-1.0 * s.p));
      return {q, s.normal, s.label};
    }
    case SurfaceKind::Hemisphere: {
      const double y = u01(rng);
      const double phi = two_pi * u01(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const V n{r * std::cos(phi), y, r * std::sin(phi)};
      return {s.p + s.radius * n, n, s.label};
    }
    case SurfaceKind::Cylinder: {
      const double phi = two_pi * u01(rng);
      const V n{std::cos(phi), 0.0, std::sin(phi)};
      return {s.p + s.radius * n + V{0.0, s.height * u01(rng), 0.0}, n, s.label};
    }
    case SurfaceKind::Cone: {
      // Area-uniform along the slant: distance from the apex ~ sqrt(u).
      const double t = std::sqrt(u01(rng));
      const double phi = two_pi * u01(rng);
      const V dir{std::cos(phi), 0.0, std::sin(phi)};
      const V point = s.p + V{0.0, s.height * (1.0 - t), 0.0} + (s.radius * t) * dir;
      const V n = unit(s.height * dir + V{0.0, s.radius, 0.0});
      return {point, n, s.label};
    }
  }
  return {};
}

Surface quad(const V& p, const V& u, const V& v, const V& outward, int label) {
  Surface s;
  s.kind = SurfaceKind::Quad;
  s.p = p;
  s.u = u;
  s.v = v;
  s.normal = unit(outward);
  s.label = label;
  return s;
}

Surface triangle(const V& a, const V& b, const V& c, const V& outward, int label) {
  Surface s;
  s.kind = SurfaceKind::Triangle;
  s.p = a;
  s.u = b;
  s.v = c;
  s.normal = unit(outward);
  s.label = label;
  return s;
}

struct Labels {
  int wall, window, roof, door, tower, ground;
};

/// Window grid (and optionally a door) on a wall of the given length.
void add_openings(Surface& wall, double length, double height, int rows, const Labels& lab, bool door) {
  if (door) {
    const double w = std::min(0.16 / length, 0.4);
    wall.openings.push_back({0.5 - w / 2, 0.5 + w / 2, 0.0, std::min(0.45, 0.3 / height), lab.door});
  }
  const int cols = std::max(1, static_cast<int>(std::lround(length / 0.3)));
  const double wu = 0.4 / cols;
  for (int r = 0; r < rows; ++r) {
    const double b0 = (r + 0.45) / rows;
    const double b1 = b0 + 0.3 / rows;
    for (int c = 0; c < cols; ++c) {
      const double a0 = (c + 0.5) / cols - wu / 2;
      if (door && r == 0 && std::abs((c + 0.5) / cols - 0.5) < 0.5 / cols) continue;
      wall.openings.push_back({a0, a0 + wu, b0, b1, lab.window});
    }
  }
}

/// Four walls of an axis-aligned box footprint [x0,x1] x [z0,z1], height h.
void add_box_walls(std::vector<Surface>& out, double x0, double x1, double z0, double z1, double h, int label) {
  out.push_back(quad({x0, 0, z1}, {x1 - x0, 0, 0}, {0, h, 0}, {0, 0, 1}, label));
  out.push_back(quad({x1, 0, z0}, {x0 - x1, 0, 0}, {0, h, 0}, {0, 0, -1}, label));
  out.push_back(quad({x1, 0, z1}, {0, 0, z0 - z1}, {0, h, 0}, {1, 0, 0}, label));
  out.push_back(quad({x0, 0, z0}, {0, 0, z1 - z0}, {0, h, 0}, {-1, 0, 0}, label));
}

struct Rect {
  double x0, x1, z0, z1;
  bool contains(double x, double z) const { return x > x0 && x < x1 && z > z0 && z < z1; }
};

std::array<float, 3> part_color(int label, const Labels& lab) {
  if (label == lab.wall) return {0.80f, 0.72f, 0.58f};
  if (label == lab.window) return {0.25f, 0.45f, 0.78f};
  if (label == lab.roof) return {0.62f, 0.22f, 0.16f};
  if (label == lab.door) return {0.42f, 0.26f, 0.12f};
  if (label == lab.tower) return {0.70f, 0.70f, 0.74f};
  if (label == lab.ground) return {0.34f, 0.56f, 0.30f};
  return {0.5f, 0.5f, 0.5f};
}

Vec3 to_up_axis(const V& p, Axis up) {
  switch (up) {
    case Axis::Y: return {static_cast<float>(p[0]), static_cast<float>(p[1]), static_cast<float>(p[2])};
    case Axis::Z: return {static_cast<float>(p[0]), static_cast<float>(p[2]), static_cast<float>(p[1])};
    case Axis::X: return {static_cast<float>(p[1]), static_cast<float>(p[0]), static_cast<float>(p[2])};
  }
  return {};
}

std::string mesh_name(const TypeRule& rule, std::size_t id) {
  std::string sub = rule.type_name;
  std::replace(sub.begin(), sub.end(), ' ', '_');
  char digits[32];
  std::snprintf(digits, sizeof digits, "%04zu", id);
  return rule.building_class + sub + "_mesh" + digits;
}

}  // namespace

GeneratorSpec GeneratorSpec::default_spec() {
  GeneratorSpec s;
  s.types = {
      {"house", "RESIDENTIAL", RoofKind::Gable, false, 1.2f, 1.6f, 0.5f, 0.7f, 0.35f, 1},
      {"church", "RELIGIOUS", RoofKind::Gable, true, 1.8f, 2.4f, 0.6f, 0.8f, 0.5f, 1},
      {"office building", "COMMERCIAL", RoofKind::Flat, false, 1.0f, 1.4f, 1.6f, 2.2f, 0.0f, 4},
      {"mosque", "RELIGIOUS", RoofKind::Dome, true, 1.0f, 1.2f, 0.5f, 0.7f, 0.0f, 1},
  };
  return s;
}

void GeneratorSpec::validate() const {
  if (types.empty()) throw Error("generator: no building types");
  const auto tv = LabelVocabulary::building_types();
  for (const auto& t : types) {
    tv.index_of(t.type_name);
    if (t.building_class.empty() ||
        !std::all_of(t.building_class.begin(), t.building_class.end(), [](char c) { return c >= 'A' && c <= 'Z'; })) {
      throw Error("generator: building class must be uppercase letters");
    }
    if (!(t.aspect_lo > 0 && t.aspect_lo <= t.aspect_hi)) throw Error("generator: bad aspect range for " + t.type_name);
    if (!(t.height_lo > 0 && t.height_lo <= t.height_hi)) throw Error("generator: bad height range for " + t.type_name);
    if (t.roof == RoofKind::Gable && !(t.roof_rise > 0)) throw Error("generator: gable roof needs a rise");
    if (t.window_rows < 1) throw Error("generator: window rows must be >= 1");
  }
  const auto pv = LabelVocabulary::building_parts();
  for (const char* req : {"wall", "roof", "ground", "window"}) {
    if (std::find(parts.begin(), parts.end(), req) == parts.end()) {
      throw Error(std::string("generator: part vocabulary must include ") + req);
    }
  }
  for (const auto& p : parts) pv.index_of(p);
  if (points_per_building < 16) throw Error("generator: too few points per building");
  if (noise_sigma < 0 || color_noise < 0) throw Error("generator: negative noise");
  if (unspecified_fraction < 0 || unspecified_fraction > 1) throw Error("generator: bad unspecified fraction");
}

BuildingRecord generate_building(const GeneratorSpec& spec, std::size_t type_position, Rng& rng, std::size_t mesh_id) {
  spec.validate();
  if (type_position >= spec.types.size()) throw Error("generate_building: type outside the spec");
  const TypeRule& rule = spec.types[type_position];
  const auto pv = LabelVocabulary::building_parts();
  auto part = [&](const char* name) {
    const bool listed = std::find(spec.parts.begin(), spec.parts.end(), name) != spec.parts.end();
    return listed ? pv.index_of(name) : pv.index_of("wall");
  };
  const Labels lab{part("wall"), part("window"), part("roof"), part("door"), part("tower"), part("ground")};

  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };
  const double length = in(rule.aspect_lo, rule.aspect_hi);
  const double depth = 1.0;
  const double h = in(rule.height_lo, rule.height_hi) * depth;
  const double x0 = -length / 2, x1 = length / 2, z0 = -depth / 2, z1 = depth / 2;
  if (!(length > 0 && h > 0)) throw Error("generate_building: degenerate extents");

  std::vector<Surface> surfaces;
  std::vector<Rect> footprints{{x0, x1, z0, z1}};
  add_box_walls(surfaces, x0, x1, z0, z1, h, lab.wall);
  add_openings(surfaces[0], length, h, rule.window_rows, lab, true);
  add_openings(surfaces[1], length, h, rule.window_rows, lab, false);
  add_openings(surfaces[2], depth, h, rule.window_rows, lab, false);
  add_openings(surfaces[3], depth, h, rule.window_rows, lab, false);

  double top = h;
  switch (rule.roof) {
    case RoofKind::Flat:
      surfaces.push_back(quad({x0, h, z0}, {length, 0, 0}, {0, 0, depth}, {0, 1, 0}, lab.roof));
      break;
    case RoofKind::Gable: {
      const double rise = rule.roof_rise * depth * in(0.9, 1.1);
      const V ridge0{x0, h + rise, 0.0};
      surfaces.push_back(quad({x0, h, z1}, {length, 0, 0}, ridge0 + V{-x0, -h, -z1}, {0, depth / 2, rise}, lab.roof));
      surfaces.push_back(quad({x0, h, z0}, {length, 0, 0}, ridge0 + V{-x0, -h, -z0}, {0, depth / 2, -rise}, lab.roof));
      surfaces.push_back(triangle({x0, h, z0}, {x0, h, z1}, ridge0, {-1, 0, 0}, lab.wall));
      surfaces.push_back(triangle({x1, h, z0}, {x1, h, z1}, {x1, h + rise, 0.0}, {1, 0, 0}, lab.wall));
      top = h + rise;
      break;
    }
    case RoofKind::Dome: {
      surfaces.push_back(quad({x0, h, z0}, {length, 0, 0}, {0, 0, depth}, {0, 1, 0}, lab.roof));
      Surface dome;
      dome.kind = SurfaceKind::Hemisphere;
      dome.p = {0.0, h, 0.0};
      dome.radius = 0.42 * std::min(length, depth);
      dome.label = lab.roof;
      surfaces.push_back(dome);
      top = h + dome.radius;
      break;
    }
  }

  if (rule.tower) {
    if (rule.roof == RoofKind::Dome) {
      // Round minaret off one corner with a conical cap.
      Surface shaft;
      shaft.kind = SurfaceKind::Cylinder;
      shaft.radius = 0.07;
      shaft.height = top + 0.35;
      shaft.p = {x1 + 0.12, 0.0, z0 - 0.12};
      shaft.label = lab.tower;
      Surface cap = shaft;
      cap.kind = SurfaceKind::Cone;
      cap.p = shaft.p + V{0.0, shaft.height, 0.0};
      cap.height = 0.2;
      surfaces.push_back(shaft);
      surfaces.push_back(cap);
      footprints.push_back({shaft.p[0] - 0.07, shaft.p[0] + 0.07, shaft.p[2] - 0.07, shaft.p[2] + 0.07});
    } else {
      // Square tower in front of the x0 gable with a pyramid cap.
      const double side = 0.36, th = top + 0.45;
      const double tx1 = x0, tx0 = x0 - side, tz0 = -side / 2, tz1 = side / 2;
      add_box_walls(surfaces, tx0, tx1, tz0, tz1, th, lab.tower);
      const V apex{(tx0 + tx1) / 2, th + 0.3, 0.0};
      surfaces.push_back(triangle({tx0, th, tz1}, {tx1, th, tz1}, apex, {0, 0.3, side / 2}, lab.tower));
      surfaces.push_back(triangle({tx1, th, tz0}, {tx0, th, tz0}, apex, {0, 0.3, -side / 2}, lab.tower));
      surfaces.push_back(triangle({tx1, th, tz1}, {tx1, th, tz0}, apex, {side / 2, 0.3, 0}, lab.tower));
      surfaces.push_back(triangle({tx0, th, tz0}, {tx0, th, tz1}, apex, {-side / 2, 0.3, 0}, lab.tower));
      footprints.push_back({tx0, tx1, tz0, tz1});
    }
  }

  double gx0 = x0, gx1 = x1, gz0 = z0, gz1 = z1;
  for (const auto& f : footprints) {
    gx0 = std::min(gx0, f.x0);
    gx1 = std::max(gx1, f.x1);
    gz0 = std::min(gz0, f.z0);
    gz1 = std::max(gz1, f.z1);
  }
  const double margin = 0.2;
  gx0 -= margin;
  gx1 += margin;
  gz0 -= margin;
  gz1 += margin;
  Surface ground = quad({gx0, 0, gz0}, {gx1 - gx0, 0, 0}, {0, 0, gz1 - gz0}, {0, 1, 0}, lab.ground);
  double covered = 0.0;
  for (const auto& f : footprints) covered += (f.x1 - f.x0) * (f.z1 - f.z0);
  const double ground_area = ground.area() - covered;

  std::vector<double> cdf;
  double acc = 0.0;
  for (const auto& s : surfaces) cdf.push_back(acc += s.area());
  cdf.push_back(acc += ground_area);

  // Per-building palette variation.
  std::array<std::array<float, 3>, kNumPartLabels> tints;
  std::normal_distribution<float> tint(1.0f, 0.05f);
  for (auto& t : tints) t = {tint(rng), tint(rng), tint(rng)};

  const std::size_t n = spec.points_per_building;
  std::vector<V> pts(n), nrm(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = u01(rng) * acc;
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
    Sample smp;
    if (k >= surfaces.size()) {
      do {
        smp = sample_surface(ground, rng);
      } while (std::any_of(footprints.begin(), footprints.end(),
                           [&](const Rect& f) { return f.contains(smp.point[0], smp.point[2]); }));
    } else {
      smp = sample_surface(surfaces[k], rng);
    }
    pts[i] = smp.point;
    nrm[i] = smp.normal;
    labels[i] = smp.label;
  }

  V lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (const auto& p : pts) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  // Leave room for the clamped coordinate noise inside the unit cube.
  const double pad = 3.0 * spec.noise_sigma;
  const double scale = (1.0 - 2.0 * pad) / extent;
  const V center{(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2};

  BuildingRecord rec;
  rec.type_position = type_position;
  rec.eave_height = static_cast<float>((h - center[1]) * scale);
  rec.ground_top = static_cast<float>((0.0 - center[1]) * scale);
  rec.part_counts.assign(pv.size(), 0);

  PointCloud& cloud = rec.cloud;
  cloud.name = mesh_name(rule, mesh_id);
  cloud.type_label = LabelVocabulary::building_types().index_of(rule.type_name);
  cloud.coords.resize(n);
  cloud.normals.emplace(n);
  cloud.colors.emplace(n);
  cloud.seg_labels.emplace(n);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
  std::normal_distribution<float> cnoise(0.0f, spec.color_noise > 0 ? spec.color_noise : 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    V p = scale * (pts[i] + (-1.0 * center));
    if (spec.noise_sigma > 0) {
      for (double& c : p) c += std::clamp(noise(rng), -pad, pad);
    }
    cloud.coords[i] = to_up_axis(p, spec.up_axis);
    (*cloud.normals)[i] = to_up_axis(nrm[i], spec.up_axis);
    int label = labels[i];
    if (spec.unspecified_fraction > 0 && u01(rng) < spec.unspecified_fraction) label = kUnspecifiedLabel;
    (*cloud.seg_labels)[i] = label;
    ++rec.part_counts[static_cast<std::size_t>(label)];
    const auto base = part_color(labels[i], lab);
    const auto& t = tints[static_cast<std::size_t>(labels[i])];
    Vec3 col;
    for (int c = 0; c < 3; ++c) {
      const float jitter = spec.color_noise > 0 ? cnoise(rng) : 0.0f;
      col[static_cast<std::size_t>(c)] = std::clamp(base[static_cast<std::size_t>(c)] * t[static_cast<std::size_t>(c)] + jitter, 0.0f, 1.0f);
    }
    (*cloud.colors)[i] = col;
  }
  cloud.validate();
  return rec;
}

DatasetInfo generate_dataset(const GeneratorSpec& spec, const SplitCounts& counts, const std::filesystem::path& root) {
  spec.validate();
  const std::array<std::size_t, 3> sizes{counts.train, counts.val, counts.test};
  const std::array<SplitName, 3> names{SplitName::Train, SplitName::Val, SplitName::Test};
  for (std::size_t s : sizes) {
    if (s < 1) throw Error("generate_dataset: every split needs at least one building");
  }
  DatasetInfo info;
  info.root = root;
  std::size_t mesh_id = 1;
  for (std::size_t si = 0; si < 3; ++si) {
    const std::string split(split_name_str(names[si]));
    const auto dir = root / split;
    std::filesystem::create_directories(dir);
    info.splits[si].split = names[si];
    info.part_counts[si].assign(kNumPartLabels, 0);
    info.type_counts[si].assign(kNumBuildingTypes, 0);
    DatasetSplit manifest_split{names[si], {}};
    for (std::size_t i = 0; i < sizes[si]; ++i) {
      Rng rng(derive_seed(spec.seed, {si, i}));
      const BuildingRecord rec = generate_building(spec, i % spec.types.size(), rng, mesh_id++);
      const auto file = dir / (rec.cloud.name + ".pcloud");
      save_point_cloud(file, rec.cloud);
      info.splits[si].entries.push_back(file);
      manifest_split.entries.push_back(std::filesystem::path(split) / file.filename());
      for (std::size_t c = 0; c < rec.part_counts.size(); ++c) info.part_counts[si][c] += rec.part_counts[c];
      ++info.type_counts[si][static_cast<std::size_t>(*rec.cloud.type_label)];
    }
    save_split_manifest(root / (split + ".txt"), manifest_split);
  }
  return info;
}

std::filesystem::path embedding_path(const std::filesystem::path& root, const std::string& name) {
  return root / "embeddings" / (name + ".pfemb");
}

ClassPrompts generate_embeddings(const GeneratorSpec& spec, const EmbeddingSpec& emb, const std::filesystem::path& root) {
  spec.validate();
  if (emb.dim < 2) throw Error("generate_embeddings: dim must be >= 2");
  if (emb.separation < 0 || emb.jitter < 0) throw Error("generate_embeddings: negative separation or jitter");
  if (emb.text_rows < 1) throw Error("generate_embeddings: need at least one text row");
  const auto types = LabelVocabulary::building_types();
  const std::size_t d = emb.dim;

  Rng rng(derive_seed(emb.seed, {0xC1A55ULL}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&]() {
    std::vector<double> v(d);
    double n2 = 0.0;
    for (auto& x : v) {
      x = gauss(rng);
      n2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(n2);
    return v;
  };
  auto normalized = [](std::vector<double> v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    for (auto& x : v) x /= n;
    return v;
  };
  const std::vector<double> shared = random_unit();
  std::vector<std::vector<double>> means(types.size());
  for (auto& m : means) {
    const auto u = random_unit();
    m.resize(d);
    for (std::size_t j = 0; j < d; ++j) m[j] = shared[j] + emb.separation * u[j];
    m = normalized(m);
  }
  // Per-component sigma so that the jitter vector has norm ~ emb.jitter.
  const double sigma = emb.jitter / std::sqrt(static_cast<double>(d));
  auto jittered = [&](const std::vector<double>& mean, Rng& r, double s) {
    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = mean[j] + s * gauss(r);
    return normalized(v);
  };

  ClassPrompts prompts;
  prompts.dim = d;
  prompts.names = types.names();
  for (std::size_t c = 0; c < types.size(); ++c) {
    const auto v = jittered(means[c], rng, 0.5 * sigma);
    prompts.vectors.insert(prompts.vectors.end(), v.begin(), v.end());
  }
  std::filesystem::create_directories(root / "embeddings");
  save_class_prompts(root / "class_prompts.pfcls", prompts);

  std::ofstream manifest(root / "embeddings.txt");
  manifest << "prompt_template=" << kPromptTemplate << '\n' << "dim=" << d << '\n';
  for (const char* split : {"train", "val", "test"}) {
    const auto mpath = root / (std::string(split) + ".txt");
    if (!std::filesystem::exists(mpath)) continue;
    for (const auto& entry : load_split_manifest(mpath, parse_split_name(split)).entries) {
      const PointCloud cloud = load_point_cloud(entry);
      if (!cloud.type_label) throw Error("generate_embeddings: '" + cloud.name + "' has no type label");
      const auto& mean = means[static_cast<std::size_t>(*cloud.type_label)];
      Rng br(derive_seed(emb.seed, {1, fnv1a64(cloud.name.data(), cloud.name.size())}));
      EmbeddingTriplet t;
      t.name = cloud.name;
      t.dim = d;
      for (std::size_t r = 0; r < emb.text_rows; ++r) {
        const auto v = jittered(mean, br, sigma);
        t.text.insert(t.text.end(), v.begin(), v.end());
      }
      for (std::size_t r = 0; r < emb.image_rows; ++r) {
        const auto v = jittered(mean, br, sigma);
        t.image.insert(t.image.end(), v.begin(), v.end());
      }
      const auto path = embedding_path(root, cloud.name);
      save_embedding(path, t);
      manifest << cloud.name << ' ' << std::filesystem::relative(path, root).generic_string() << '\n';
    }
  }
  return prompts;
}

}  // namespace pf
