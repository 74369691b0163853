// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointforge/checkpoint.hpp"
#include "pointforge/geometry.hpp"
#include "pointforge/model_config.hpp"
#include "pointforge/ops.hpp"
#include "pointforge/optim.hpp"
#include "pointforge/point_cloud.hpp"

namespace pf {

/// Several clouds stacked row-wise. Cloud b owns rows
/// [offsets[b], offsets[b+1]).
struct Batch {
  std::vector<Vec3> coords;
  std::vector<float> features;  // rows x channels
  std::size_t channels = 0;
  std::vector<std::size_t> offsets{0};

  std::size_t rows() const { return coords.size(); }
  std::size_t clouds() const { return offsets.size() - 1; }
};

/// Appends the feature row layout [normals, colors, height, coords]. Missing
/// normals or colors become zeros; missing heights are derived.
void append_cloud(Batch& batch, const PointCloud& cloud, Axis up_axis = Axis::Y);
Batch make_batch(std::span<const PointCloud> clouds, Axis up_axis = Axis::Y);

struct ForwardOptions {
  bool training = false;
  StartPolicy fps_start = StartPolicy::Deterministic;
  Rng* fps_rng = nullptr;
  Rng* dropout_rng = nullptr;
};

/// Neighborhoods for one encoder level, with global row indices.
struct GroupPlan {
  std::size_t k = 0;
  std::vector<std::size_t> neighbors;  // rows * k into the source level
  std::vector<float> offsets;          // rows * k * 3, (p_j - p_i) / radius
};

struct LevelPlan {
  std::vector<Vec3> coords;
  std::vector<std::size_t> offsets;  // per-cloud row ranges
  std::vector<std::size_t> sampled;  // global rows of the previous level (empty for level 0)
  GroupPlan down;                    // set abstraction grouping (previous level -> this level)
  GroupPlan local;                   // stride-1 grouping used by the blocks
};

struct InterpPlan {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // fine rows * k into the coarse level
  std::vector<double> weights;
};

/// Level 0 is the input resolution; level t+1 is stage t's output.
struct GeometryPlan {
  std::vector<LevelPlan> levels;
  std::vector<InterpPlan> up;  // up[t]: level t+1 -> level t
};

GeometryPlan plan_geometry(const ModelConfig& config, std::span<const Vec3> coords,
                           std::span<const std::size_t> offsets, const ForwardOptions& options,
                           bool with_decoder);

/// Pointwise linear layer, optionally followed by batch norm and ReLU.
template <class T>
struct MlpUnit {
  nn::Tensor<T> weight, bias, gamma, beta;
  std::optional<nn::BatchNormState<T>> bn;
  bool relu = true;

  MlpUnit() = default;
  MlpUnit(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin, std::size_t cout, bool norm,
          bool relu, std::uint64_t seed);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, bool training);
};

/// Grouped input concat(offsets / r, x[neighbors]) of shape [rows, k, 3 + C].
template <class T>
nn::Tensor<T> group_features(const nn::Tensor<T>& x, const GroupPlan& plan);

template <class T>
struct SetAbstraction {
  MlpUnit<T> mlp;

  SetAbstraction() = default;
  SetAbstraction(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin, std::size_t cout,
                 std::uint64_t seed);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, const LevelPlan& level, bool training);
};

/// Grouped MLP, max over neighbors, then two pointwise layers with the
/// hidden width expanded; the result is added to the (projected) input.
template <class T>
struct InvResBlock {
  MlpUnit<T> group, expand, reduce;
  std::optional<MlpUnit<T>> shortcut;

  InvResBlock() = default;
  InvResBlock(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t expansion, std::uint64_t seed);
  nn::Tensor<T> operator()(const nn::Tensor<T>& x, const LevelPlan& level, bool training);
};

/// Interpolates coarse features onto the fine level, concatenates the skip
/// features and applies one MLP unit.
template <class T>
struct FeaturePropagation {
  MlpUnit<T> mlp;

  FeaturePropagation() = default;
  FeaturePropagation(nn::ParameterSet<T>& params, const std::string& name, std::size_t coarse_width,
                     std::size_t skip_width, std::size_t cout, std::uint64_t seed);
  nn::Tensor<T> operator()(const nn::Tensor<T>& coarse, const nn::Tensor<T>& skip, const InterpPlan& plan,
                           bool training);
};

template <class T>
struct EncoderOutput {
  std::vector<nn::Tensor<T>> features;  // per level
  nn::Tensor<T> global;                 // [clouds, encoder width]
};

template <class T>
struct ModelOutput {
  nn::Tensor<T> cls_logits;  // [clouds, num_classes]
  nn::Tensor<T> seg_logits;  // [rows, num_parts]
  nn::Tensor<T> global;
};

template <class T>
class PointNeXt {
 public:
  explicit PointNeXt(ModelConfig config, std::uint64_t seed = 0);

  PointNeXt(const PointNeXt&) = delete;
  PointNeXt& operator=(const PointNeXt&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

  EncoderOutput<T> encode(const Batch& batch, const GeometryPlan& plan, bool training);
  /// Runs every head the config has. Seg logits are per input row; class
  /// index c means part label c + 1.
  ModelOutput<T> forward(const Batch& batch, const ForwardOptions& options);
  ModelOutput<T> forward(const Batch& batch, const GeometryPlan& plan, const ForwardOptions& options);

  nn::Tensor<T> classification_forward(const Batch& batch, const ForwardOptions& options);
  nn::Tensor<T> segmentation_forward(const Batch& batch, const ForwardOptions& options);

  MlpUnit<T>& stem() { return stem_; }
  std::vector<SetAbstraction<T>>& set_abstractions() { return sa_; }
  std::vector<std::vector<InvResBlock<T>>>& blocks() { return blocks_; }

 private:
  nn::Tensor<T> input_tensor(const Batch& batch) const;

  ModelConfig config_;
  std::uint64_t seed_;
  nn::ParameterSet<T> params_;
  MlpUnit<T> stem_;
  std::vector<SetAbstraction<T>> sa_;
  std::vector<std::vector<InvResBlock<T>>> blocks_;
  std::vector<MlpUnit<T>> cls_hidden_;
  MlpUnit<T> cls_out_;
  std::vector<FeaturePropagation<T>> fp_;
  MlpUnit<T> seg_hidden_, seg_out_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) values seeded by the model seed
/// and the parameter name, so equally named parameters match across models.
template <class T>
nn::Tensor<T> init_uniform(const std::string& name, nn::Shape shape, std::size_t fan_in, std::uint64_t seed);

template <class T>
std::uint64_t save_model(const PointNeXt<T>& model, const std::filesystem::path& path);

/// Non-strict loading copies the name+shape intersection; strict loading
/// throws when the sets differ.
template <class T>
nn::LoadReport load_checkpoint(PointNeXt<T>& model, const std::filesystem::path& path, bool strict);

/// Checksum over parameter and buffer values, independent of file layout.
template <class T>
std::uint64_t parameter_checksum(const nn::ParameterSet<T>& params);

extern template struct MlpUnit<float>;
extern template struct MlpUnit<double>;
extern template class PointNeXt<float>;
extern template class PointNeXt<double>;

}  // namespace pf
