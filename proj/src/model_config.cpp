// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/model_config.hpp"

#include <cmath>

#include "pointforge/common.hpp"

namespace pf {

HeadKind parse_head_kind(std::string_view text) {
  if (text == "classification") return HeadKind::Classification;
  if (text == "segmentation") return HeadKind::Segmentation;
  if (text == "multitask") return HeadKind::Multitask;
  if (text == "encoder") return HeadKind::Encoder;
  throw ParseError("unknown head kind '" + std::string(text) + "'");
}

std::string_view head_kind_name(HeadKind head) {
  switch (head) {
    case HeadKind::Classification: return "classification";
    case HeadKind::Segmentation: return "segmentation";
    case HeadKind::Multitask: return "multitask";
    case HeadKind::Encoder: return "encoder";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (input_channels == 0 || stem_width == 0) throw Error("model config: zero input or stem width");
  if (stages.empty()) throw Error("model config: at least one stage is required");
  if (expansion == 0) throw Error("model config: expansion must be positive");
  if (fp_neighbors == 0) throw Error("model config: fp_neighbors must be positive");
  if (!(cls_dropout >= 0.0 && cls_dropout < 1.0)) throw Error("model config: dropout must be in [0,1)");
  float prev = 0.0f;
  for (std::size_t t = 0; t < stages.size(); ++t) {
    const auto& s = stages[t];
    const std::string at = "model config stage " + std::to_string(t) + ": ";
    if (s.stride < 1) throw Error(at + "stride must be >= 1");
    if (!(s.radius > 0.0f) || !std::isfinite(s.radius)) throw Error(at + "radius must be positive");
    if (s.neighbors < 1) throw Error(at + "neighbors must be >= 1");
    if (s.blocks < 0) throw Error(at + "negative block count");
    if (s.width == 0) throw Error(at + "width must be positive");
    if (double_radius && s.radius < prev) throw Error(at + "radii must be non-decreasing");
    prev = s.radius;
  }
  if (has_cls_head() && num_classes < 2) throw Error("model config: need at least 2 classes");
  if (has_seg_head() && num_parts < 2) throw Error("model config: need at least 2 part classes");
}

void apply_radius_policy(ModelConfig& config, float base_radius) {
  if (!(base_radius > 0.0f)) throw Error("radius must be positive");
  float r = base_radius;
  for (auto& s : config.stages) {
    s.radius = r;
    if (config.double_radius) r *= 2.0f;
  }
}

std::vector<std::string> preset_names() { return {"tiny", "s", "xl"}; }

ModelConfig model_preset(std::string_view name, HeadKind head, float base_radius, StrideProfile profile) {
  ModelConfig c;
  c.head = head;
  const std::size_t stride = profile == StrideProfile::Seg ? 4 : 2;
  if (name == "tiny") {
    c.stem_width = 16;
    c.stages = {{stride, 0, 16, 1, 16}, {stride, 0, 16, 1, 32}};
  } else if (name == "s") {
    c.stem_width = 32;
    c.stages = {{stride, 0, 32, 1, 64}, {stride, 0, 32, 1, 128}, {stride, 0, 32, 1, 256}, {stride, 0, 32, 1, 512}};
  } else if (name == "xl") {
    c.stem_width = 64;
    c.stages = {{stride, 0, 32, 4, 128}, {stride, 0, 32, 7, 256}, {stride, 0, 32, 4, 512}, {stride, 0, 32, 4, 1024}};
  } else {
    throw ParseError("unknown model preset '" + std::string(name) + "'");
  }
  apply_radius_policy(c, base_radius);
  c.validate();
  return c;
}

}  // namespace pf
