// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pointforge/point_cloud.hpp"
#include "pointforge/tensor.hpp"

namespace pf {

inline constexpr double kInverseLogLambda = 1.2;

struct ClassWeights {
  std::vector<double> weights;      // 0 for the ignored class, positive otherwise
  std::vector<double> frequencies;  // over non-ignored classes, sums to 1
};

/// w_c = 1 / ln(lambda + f_c). Classes never seen get 1 / ln(lambda).
ClassWeights inverse_log_frequency_weights(std::span<const std::uint64_t> counts, std::optional<int> ignore_index,
                                           double lambda = kInverseLogLambda);

/// beta * cls + (1 - beta) * seg.
double multitask_loss(double cls_loss, double seg_loss, double beta);
template <class T>
nn::Tensor<T> multitask_loss(const nn::Tensor<T>& cls_loss, const nn::Tensor<T>& seg_loss, double beta);

/// Percentage of matching entries.
double overall_accuracy(std::span<const int> predictions, std::span<const int> truths);

/// 2 / (1/acc + 1/piou); 0 when either input is 0.
double harmonic_mean(double accuracy, double part_iou);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, std::optional<int> ignore_index = std::nullopt);

  /// Points whose truth is the ignore index are skipped; a prediction of
  /// the ignore index counts only as a miss for the true class.
  void add(std::span<const int> predictions, std::span<const int> truths);
  void merge(const ConfusionMatrix& other);

  std::uint64_t true_positive(int c) const;
  std::uint64_t false_positive(int c) const;
  std::uint64_t false_negative(int c) const;
  std::uint64_t scored_points() const { return scored_; }
  int num_classes() const { return n_; }
  /// 100 * TP / (TP + FP + FN); nullopt when the union is empty.
  std::optional<double> iou(int c) const;

 private:
  int n_;
  std::optional<int> ignore_;
  std::vector<std::uint64_t> counts_;  // [truth][pred]
  std::uint64_t scored_ = 0;
};

enum class IouMode { Pooled, PerBuildingAverage };

struct PartIouResult {
  std::vector<std::optional<double>> per_class_iou;  // nullopt for zero-union classes
  double part_iou = 0.0;
};

/// Pooled mode sums TP/FP/FN over all clouds; per-building mode averages
/// each class's IoU over the clouds where that class has a non-empty union.
PartIouResult part_iou(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> truths,
                       int num_classes, std::optional<int> ignore_index, IouMode mode = IouMode::Pooled);

/// Mean over clouds of the mean IoU over classes present in that cloud.
double shape_iou(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> truths,
                 int num_classes, std::optional<int> ignore_index);

struct EvalReport {
  std::vector<std::optional<double>> per_class_iou;
  std::optional<double> part_iou;
  std::optional<double> shape_iou;
  std::optional<double> overall_accuracy;
  std::optional<double> harmonic_mean;
};

/// Flat "key=value" lines.
std::string format_report(const EvalReport& report);
/// "class,iou" CSV, one row per class that has a value; names from vocab.
std::string format_per_class_csv(const EvalReport& report, const LabelVocabulary& vocab);
void write_report(const std::filesystem::path& dir, const EvalReport& report, const LabelVocabulary& vocab);

}  // namespace pf
