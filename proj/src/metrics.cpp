// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "pointforge/ops.hpp"

namespace pf {

ClassWeights inverse_log_frequency_weights(std::span<const std::uint64_t> counts, std::optional<int> ignore_index,
                                           double lambda) {
  if (!(lambda > 1.0)) throw Error("inverse_log_frequency_weights: lambda must exceed 1");
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (ignore_index && static_cast<int>(c) == *ignore_index) continue;
    total += static_cast<double>(counts[c]);
  }
  if (total <= 0.0) throw Error("inverse_log_frequency_weights: all counts are zero");
  ClassWeights w;
  w.weights.assign(counts.size(), 0.0);
  w.frequencies.assign(counts.size(), 0.0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (ignore_index && static_cast<int>(c) == *ignore_index) continue;
    const double f = static_cast<double>(counts[c]) / total;
    w.frequencies[c] = f;
    w.weights[c] = 1.0 / std::log(lambda + f);
  }
  return w;
}

double multitask_loss(double cls_loss, double seg_loss, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("multitask_loss: beta must be in [0,1]");
  return beta * cls_loss + (1.0 - beta) * seg_loss;
}

template <class T>
nn::Tensor<T> multitask_loss(const nn::Tensor<T>& cls_loss, const nn::Tensor<T>& seg_loss, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("multitask_loss: beta must be in [0,1]");
  return nn::add(nn::mul_scalar(cls_loss, beta), nn::mul_scalar(seg_loss, 1.0 - beta));
}

template nn::Tensor<float> multitask_loss(const nn::Tensor<float>&, const nn::Tensor<float>&, double);
template nn::Tensor<double> multitask_loss(const nn::Tensor<double>&, const nn::Tensor<double>&, double);

double overall_accuracy(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw Error("overall_accuracy: length mismatch");
  if (truths.empty()) throw Error("overall_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) correct += predictions[i] == truths[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(truths.size());
}

double harmonic_mean(double accuracy, double part_iou) {
  if (accuracy <= 0.0 || part_iou <= 0.0) return 0.0;
  return 2.0 / (1.0 / accuracy + 1.0 / part_iou);
}

ConfusionMatrix::ConfusionMatrix(int num_classes, std::optional<int> ignore_index)
    : n_(num_classes), ignore_(ignore_index) {
  if (num_classes < 1) throw Error("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_), 0);
}

void ConfusionMatrix::add(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw Error("confusion matrix: length mismatch");
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i];
    const int p = predictions[i];
    if (ignore_ && t == *ignore_) continue;
    if (t < 0 || t >= n_ || p < 0 || p >= n_) throw Error("confusion matrix: label out of range");
    ++counts_[static_cast<std::size_t>(t) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(p)];
    ++scored_;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw Error("confusion matrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  scored_ += other.scored_;
}

std::uint64_t ConfusionMatrix::true_positive(int c) const {
  return counts_[static_cast<std::size_t>(c) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(c)];
}

std::uint64_t ConfusionMatrix::false_positive(int c) const {
  if (ignore_ && c == *ignore_) return 0;
  std::uint64_t s = 0;
  for (int t = 0; t < n_; ++t) {
    if (t != c) s += counts_[static_cast<std::size_t>(t) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(c)];
  }
  return s;
}

std::uint64_t ConfusionMatrix::false_negative(int c) const {
  std::uint64_t s = 0;
  for (int p = 0; p < n_; ++p) {
    if (p != c) s += counts_[static_cast<std::size_t>(c) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(p)];
  }
  return s;
}

std::optional<double> ConfusionMatrix::iou(int c) const {
  if (ignore_ && c == *ignore_) return std::nullopt;
  const std::uint64_t tp = true_positive(c);
  const std::uint64_t uni = tp + false_positive(c) + false_negative(c);
  if (uni == 0) return std::nullopt;
  return 100.0 * static_cast<double>(tp) / static_cast<double>(uni);
}

namespace {

double mean_present(const std::vector<std::optional<double>>& values) {
  double s = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      s += *v;
      ++n;
    }
  }
  return n == 0 ? 0.0 : s / n;
}

void check_aligned(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> truths) {
  if (predictions.size() != truths.size()) throw Error("iou: cloud count mismatch");
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (predictions[i].size() != truths[i].size()) throw Error("iou: point count mismatch in cloud " + std::to_string(i));
  }
}

}  // namespace

PartIouResult part_iou(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> truths,
                       int num_classes, std::optional<int> ignore_index, IouMode mode) {
  check_aligned(predictions, truths);
  PartIouResult r;
  r.per_class_iou.assign(static_cast<std::size_t>(num_classes), std::nullopt);
  if (mode == IouMode::Pooled) {
    ConfusionMatrix cm(num_classes, ignore_index);
    for (std::size_t i = 0; i < truths.size(); ++i) cm.add(predictions[i], truths[i]);
    if (cm.scored_points() == 0) throw Error("part_iou: no non-ignored points");
    for (int c = 0; c < num_classes; ++c) r.per_class_iou[static_cast<std::size_t>(c)] = cm.iou(c);
  } else {
    std::vector<double> sums(static_cast<std::size_t>(num_classes), 0.0);
    std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
    std::uint64_t scored = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      ConfusionMatrix cm(num_classes, ignore_index);
      cm.add(predictions[i], truths[i]);
      scored += cm.scored_points();
      for (int c = 0; c < num_classes; ++c) {
        if (auto v = cm.iou(c)) {
          sums[static_cast<std::size_t>(c)] += *v;
          ++seen[static_cast<std::size_t>(c)];
        }
      }
    }
    if (scored == 0) throw Error("part_iou: no non-ignored points");
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (seen[c] > 0) r.per_class_iou[c] = sums[c] / seen[c];
    }
  }
  r.part_iou = mean_present(r.per_class_iou);
  return r;
}

double shape_iou(std::span<const std::vector<int>> predictions, std::span<const std::vector<int>> truths,
                 int num_classes, std::optional<int> ignore_index) {
  check_aligned(predictions, truths);
  double total = 0.0;
  int clouds = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ConfusionMatrix cm(num_classes, ignore_index);
    cm.add(predictions[i], truths[i]);
    if (cm.scored_points() == 0) continue;
    std::vector<std::optional<double>> ious;
    for (int c = 0; c < num_classes; ++c) ious.push_back(cm.iou(c));
    total += mean_present(ious);
    ++clouds;
  }
  if (clouds == 0) throw Error("shape_iou: no cloud with non-ignored points");
  return total / clouds;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) out << key << '=' << *v << '\n';
  };
  put("overall_accuracy", report.overall_accuracy);
  put("part_iou", report.part_iou);
  put("shape_iou", report.shape_iou);
  put("harmonic_mean", report.harmonic_mean);
  return out.str();
}

std::string format_per_class_csv(const EvalReport& report, const LabelVocabulary& vocab) {
  std::ostringstream out;
  out.precision(4);
  out << std::fixed << "class,iou\n";
  for (std::size_t c = 0; c < report.per_class_iou.size(); ++c) {
    if (!report.per_class_iou[c]) continue;
    out << vocab.name(static_cast<int>(c)) << ',' << *report.per_class_iou[c] << '\n';
  }
  return out.str();
}

void write_report(const std::filesystem::path& dir, const EvalReport& report, const LabelVocabulary& vocab) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.txt") << format_report(report);
  std::ofstream(dir / "per_class_iou.csv") << format_per_class_csv(report, vocab);
}

}  // namespace pf
