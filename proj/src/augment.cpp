// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pf {

void AugmentConfig::validate() const {
  if (!(scale_lo > 0.0f) || !(scale_lo <= scale_hi)) throw Error("augment: need 0 < scale_lo <= scale_hi");
  if (!(jitter_sigma >= 0.0f)) throw Error("augment: jitter_sigma must be >= 0");
  if (!(jitter_clip >= 0.0f)) throw Error("augment: jitter_clip must be >= 0");
  auto prob = [](float p, const char* what) {
    if (!(p >= 0.0f && p <= 1.0f)) throw Error(std::string("augment: ") + what + " must be in [0,1]");
  };
  prob(color_drop_prob, "color_drop_prob");
  prob(color_contrast_prob, "color_contrast_prob");
  prob(contrast_blend, "contrast_blend");
  if (loop_factor < 1) throw Error("augment: loop_factor must be >= 1");
}

AugmentConfig AugmentConfig::disabled() {
  AugmentConfig c;
  c.rotation_enabled = false;
  c.scale_lo = c.scale_hi = 1.0f;
  c.jitter_sigma = 0.0f;
  c.jitter_clip = 0.0f;
  c.color_drop_prob = 0.0f;
  c.color_contrast_prob = 0.0f;
  c.loop_factor = 1;
  return c;
}

namespace {

Vec3 rotate(const Vec3& v, int up, double c, double s) {
  // Right-handed rotation about the up axis, acting on the remaining two
  // axes in cyclic order (up+1, up+2).
  const int a = (up + 1) % 3;
  const int b = (up + 2) % 3;
  Vec3 out = v;
  out[a] = static_cast<float>(c * v[a] - s * v[b]);
  out[b] = static_cast<float>(s * v[a] + c * v[b]);
  return out;
}

bool scaling_enabled(const AugmentConfig& c) { return c.scale_lo != 1.0f || c.scale_hi != 1.0f; }
bool jitter_enabled(const AugmentConfig& c) { return c.jitter_sigma > 0.0f && c.jitter_clip > 0.0f; }

}  // namespace

PointCloud rotate_about_axis(const PointCloud& cloud, Axis up_axis, double theta) {
  const int up = static_cast<int>(up_axis);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  PointCloud out = cloud;
  for (auto& p : out.coords) p = rotate(p, up, c, s);
  if (out.normals) {
    for (auto& n : *out.normals) n = rotate(n, up, c, s);
  }
  return out;
}

PointCloud random_rotation(const PointCloud& cloud, Axis up_axis, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  return rotate_about_axis(cloud, up_axis, angle(rng));
}

PointCloud scale_cloud(const PointCloud& cloud, float factor) {
  PointCloud out = cloud;
  for (auto& p : out.coords) {
    for (float& x : p) x *= factor;
  }
  return out;
}

PointCloud random_scaling(const PointCloud& cloud, float lo, float hi, Rng& rng) {
  if (!(lo > 0.0f) || !(lo <= hi)) throw Error("random_scaling: need 0 < lo <= hi");
  std::uniform_real_distribution<float> factor(lo, hi);
  return scale_cloud(cloud, lo == hi ? lo : factor(rng));
}

PointCloud jitter(const PointCloud& cloud, float sigma, float clip, Rng& rng) {
  if (!(sigma >= 0.0f) || !(clip >= 0.0f)) throw Error("jitter: sigma and clip must be >= 0");
  if (sigma == 0.0f || clip == 0.0f) return cloud;
  std::normal_distribution<float> noise(0.0f, sigma);
  PointCloud out = cloud;
  for (auto& p : out.coords) {
    for (float& x : p) x += std::clamp(noise(rng), -clip, clip);
  }
  return out;
}

PointCloud color_drop(const PointCloud& cloud, float prob, Rng& rng) {
  if (!cloud.colors) throw Error("color_drop: cloud has no colors");
  std::bernoulli_distribution drop(prob);
  if (!drop(rng)) return cloud;
  PointCloud out = cloud;
  for (auto& c : *out.colors) c = {0.0f, 0.0f, 0.0f};
  return out;
}

PointCloud auto_contrast(const PointCloud& cloud, float blend) {
  if (!cloud.colors) throw Error("color_auto_contrast: cloud has no colors");
  if (!(blend >= 0.0f && blend <= 1.0f)) throw Error("color_auto_contrast: blend must be in [0,1]");
  PointCloud out = cloud;
  auto& colors = *out.colors;
  for (int ch = 0; ch < 3; ++ch) {
    float lo = colors.front()[ch];
    float hi = lo;
    for (const auto& c : colors) {
      lo = std::min(lo, c[ch]);
      hi = std::max(hi, c[ch]);
    }
    if (!(hi > lo)) continue;
    const float inv = 1.0f / (hi - lo);
    for (auto& c : colors) {
      const float stretched = (c[ch] - lo) * inv;
      c[ch] = std::clamp(blend * stretched + (1.0f - blend) * c[ch], 0.0f, 1.0f);
    }
  }
  return out;
}

PointCloud color_auto_contrast(const PointCloud& cloud, float prob, float blend, Rng& rng) {
  if (!cloud.colors) throw Error("color_auto_contrast: cloud has no colors");
  std::bernoulli_distribution apply(prob);
  if (!apply(rng)) return cloud;
  return auto_contrast(cloud, blend);
}

PointCloud apply_pipeline(const PointCloud& cloud, const AugmentConfig& config, AugmentStage stage, Rng& rng) {
  config.validate();
  PointCloud out = cloud;
  bool moved = false;
  if (stage == AugmentStage::PreVoxelize) {
    if (config.rotation_enabled) {
      out = random_rotation(out, config.up_axis, rng);
      moved = true;
    }
  } else {
    if (out.colors && config.color_contrast_prob > 0.0f) {
      out = color_auto_contrast(out, config.color_contrast_prob, config.contrast_blend, rng);
    }
    if (scaling_enabled(config)) {
      out = random_scaling(out, config.scale_lo, config.scale_hi, rng);
      moved = true;
    }
    if (jitter_enabled(config)) {
      out = jitter(out, config.jitter_sigma, config.jitter_clip, rng);
      moved = true;
    }
    if (out.colors && config.color_drop_prob > 0.0f) out = color_drop(out, config.color_drop_prob, rng);
  }
  if (moved && out.heights) out = compute_heights(out, config.up_axis);
  return out;
}

}  // namespace pf
