// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pf {

// Per-point input features: normals(3), colors(3), height(1), coords(3).
inline constexpr std::size_t kDefaultInputChannels = 10;

enum class HeadKind { Classification, Segmentation, Multitask, Encoder };
enum class StrideProfile { Seg, Cls };

HeadKind parse_head_kind(std::string_view text);
std::string_view head_kind_name(HeadKind head);

struct StageConfig {
  std::size_t stride = 4;
  float radius = 0.1f;
  std::size_t neighbors = 32;
  int blocks = 1;  // InvResMLP blocks after the set abstraction
  std::size_t width = 64;
};

struct ModelConfig {
  std::size_t input_channels = kDefaultInputChannels;
  std::size_t stem_width = 32;
  std::vector<StageConfig> stages;
  std::size_t expansion = 4;
  HeadKind head = HeadKind::Segmentation;
  std::size_t num_classes = 15;
  std::vector<std::size_t> cls_hidden{512, 256};
  double cls_dropout = 0.5;
  std::size_t num_parts = 31;
  std::size_t fp_neighbors = 3;
  bool double_radius = true;

  bool has_cls_head() const { return head == HeadKind::Classification || head == HeadKind::Multitask; }
  bool has_seg_head() const { return head == HeadKind::Segmentation || head == HeadKind::Multitask; }
  std::size_t encoder_width() const { return stages.empty() ? stem_width : stages.back().width; }

  void validate() const;
};

/// Stage t gets radius base * 2^t.
void apply_radius_policy(ModelConfig& config, float base_radius);

/// "tiny", "s" or "xl".
ModelConfig model_preset(std::string_view name, HeadKind head, float base_radius,
                         StrideProfile profile = StrideProfile::Seg);

std::vector<std::string> preset_names();

}  // namespace pf
