// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pointforge/common.hpp"
#include "pointforge/point_cloud.hpp"

namespace pf {

struct AugmentConfig {
  bool rotation_enabled = true;
  Axis up_axis = Axis::Y;
  float scale_lo = 0.9f;
  float scale_hi = 1.1f;
  float jitter_sigma = 0.005f;
  float jitter_clip = 0.02f;
  float color_drop_prob = 0.2f;
  float color_contrast_prob = 0.2f;
  float contrast_blend = 0.5f;
  int loop_factor = 12;

  void validate() const;
  /// Everything off, loop factor 1.
  static AugmentConfig disabled();
};

enum class AugmentStage { PreVoxelize, PostVoxelize };

/// Rotation by a fixed angle (radians) about the up axis. Coordinates along
/// the up axis are copied unchanged.
PointCloud rotate_about_axis(const PointCloud& cloud, Axis up_axis, double theta);
PointCloud random_rotation(const PointCloud& cloud, Axis up_axis, Rng& rng);

PointCloud scale_cloud(const PointCloud& cloud, float factor);
PointCloud random_scaling(const PointCloud& cloud, float lo, float hi, Rng& rng);

PointCloud jitter(const PointCloud& cloud, float sigma, float clip, Rng& rng);

PointCloud color_drop(const PointCloud& cloud, float prob, Rng& rng);

/// Per-channel min/max stretch blended with the original colors.
PointCloud auto_contrast(const PointCloud& cloud, float blend);
PointCloud color_auto_contrast(const PointCloud& cloud, float prob, float blend, Rng& rng);

/// Pre-voxelize: rotation. Post-voxelize: auto contrast, scaling, jitter,
/// color drop. Disabled steps draw no random numbers; heights, when
/// present, are recomputed after the geometric steps.
PointCloud apply_pipeline(const PointCloud& cloud, const AugmentConfig& config, AugmentStage stage, Rng& rng);

}  // namespace pf
