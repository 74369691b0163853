// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pointforge/ops.hpp"
#include "pointforge/optim.hpp"
#include "pointforge/pointnext.hpp"

namespace pf {

inline constexpr std::string_view kPromptTemplate = "a point cloud model of {category}";
inline constexpr double kInitialTemperature = 0.07;

/// Frozen text and image embeddings of one building, rows of width dim.
struct EmbeddingTriplet {
  std::string name;
  std::size_t dim = 0;
  std::vector<float> text;   // text_rows() x dim
  std::vector<float> image;  // image_rows() x dim

  std::size_t text_rows() const { return dim ? text.size() / dim : 0; }
  std::size_t image_rows() const { return dim ? image.size() / dim : 0; }
  void validate() const;
};

// "PFEMB v1\n", u32 name length + name, u32 dim, u32 text rows, u32 image
// rows, then float32 little-endian rows (text first).
void save_embedding(const std::filesystem::path& path, const EmbeddingTriplet& triplet);
EmbeddingTriplet load_embedding(const std::filesystem::path& path);

/// One text feature per class for zero-shot prediction.
struct ClassPrompts {
  std::vector<std::string> names;
  std::size_t dim = 0;
  std::vector<float> vectors;  // names.size() x dim

  std::span<const float> row(std::size_t c) const { return {vectors.data() + c * dim, dim}; }
};

// "PFCLS v1\n", u32 class count, u32 dim, then per class u32 name length +
// name, then float32 little-endian rows.
void save_class_prompts(const std::filesystem::path& path, const ClassPrompts& prompts);
ClassPrompts load_class_prompts(const std::filesystem::path& path);

/// Mean over the text rows, L2-normalized. Throws when the mean vanishes.
std::vector<double> average_text_embedding(const EmbeddingTriplet& triplet);

/// Symmetric InfoNCE between row-normalized P and T with temperature
/// exp(log_tau): (CE(P T^T / tau, diag) + CE(T P^T / tau, diag)) / 2.
template <class T>
nn::Tensor<T> contrastive_alignment_loss(const nn::Tensor<T>& points, const nn::Tensor<T>& targets,
                                         const nn::Tensor<T>& log_tau);

struct ZeroShotResult {
  int top1 = -1;
  std::vector<int> top5;
  std::vector<double> similarity;  // per candidate, in candidate order
};

/// Nearest class by cosine similarity; ties go to the lower index. When
/// `candidates` is non-empty only those class indices compete.
ZeroShotResult zero_shot_classify(std::span<const double> feature, const ClassPrompts& prompts,
                                  std::span<const int> candidates = {});

/// Linear map from encoder width to the embedding width plus one learnable
/// log-temperature per modality.
template <class T>
struct ProjectionHead {
  nn::Tensor<T> weight;
  nn::Tensor<T> log_tau_text;
  nn::Tensor<T> log_tau_image;

  ProjectionHead() = default;
  ProjectionHead(nn::ParameterSet<T>& params, std::size_t width, std::size_t dim, std::uint64_t seed);
  nn::Tensor<T> operator()(const nn::Tensor<T>& global) const { return nn::dense(global, weight); }
  /// Keeps tau within [0.01, 1] after an optimizer step.
  void clamp_temperature();
};

struct PretrainSample {
  PointCloud cloud;  // already sampled and augmented
  const EmbeddingTriplet* triplet = nullptr;
};

struct PretrainStepResult {
  double loss = 0.0;
  double text_loss = 0.0;
  double image_loss = 0.0;
};

/// Encoder forward, projection, text + image contrastive loss, backward,
/// optimizer step. Embeddings are constants and never change.
template <class Optimizer>
PretrainStepResult pretrain_step(PointNeXt<float>& model, ProjectionHead<float>& head, Optimizer& optimizer,
                                 std::span<const PretrainSample> batch, const ForwardOptions& options, Rng& rng,
                                 Axis up_axis = Axis::Y);

/// Normalized projected features of each cloud in eval mode, as rows of
/// doubles.
std::vector<std::vector<double>> embed_clouds(PointNeXt<float>& model, const ProjectionHead<float>& head,
                                              std::span<const PointCloud> clouds, Axis up_axis = Axis::Y);

extern template struct ProjectionHead<float>;
extern template struct ProjectionHead<double>;

}  // namespace pf
