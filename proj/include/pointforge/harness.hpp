// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pointforge/augment.hpp"
#include "pointforge/metrics.hpp"
#include "pointforge/pointnext.hpp"
#include "pointforge/ulip.hpp"

namespace pf {

enum class Task { Classification, Segmentation, Multitask, UlipPretrain };
enum class OptimizerKind { Sgd, Adam };

Task parse_task(std::string_view text);
std::string_view task_name(Task task);
HeadKind head_for_task(Task task);

struct TrainConfig {
  Task task = Task::Segmentation;
  int epochs = 100;
  double lr = 0.01;
  nn::ScheduleKind schedule = nn::ScheduleKind::Cosine;
  double min_lr = 0.0;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double beta = 0.01;
  float voxel_size = 0.02f;
  std::size_t sample_size = 12500;
  float radius = 0.05f;
  std::size_t batch_size = 8;
  AugmentConfig augment;
  std::string preset = "s";
  StrideProfile profile = StrideProfile::Seg;
  std::optional<std::filesystem::path> init;
  bool strict = false;
  std::uint64_t seed = 0;
  bool deterministic = false;
  IouMode iou_mode = IouMode::Pooled;

  void validate() const;
  ModelConfig model_config() const;
};

/// Clouds of one dataset, with heights derived on load.
struct Dataset {
  std::filesystem::path root;
  std::vector<PointCloud> train, val, test;
};

/// Reads <root>/{train,val,test}.txt; missing manifests give empty splits.
Dataset load_dataset(const std::filesystem::path& root, Axis up_axis = Axis::Y);

/// Per-class weights (31 entries, part label c + 1) from a split's labels.
std::vector<double> segmentation_class_weights(std::span<const PointCloud> clouds);

/// Part label (1..31) to logit index (0..30); unspecified maps to -1.
int seg_target(int label);

struct StepResult {
  double loss = 0.0;
  double cls_loss = 0.0;
  double seg_loss = 0.0;
};

/// Raised when a loss turns non-finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, long long step, const std::string& what);
  int epoch;
  long long step;
};

struct BatchItem {
  int loop = 0;
  std::size_t entry = 0;
};

/// Owns the model and optimizer for one run and exposes the per-step API.
class Trainer {
 public:
  Trainer(TrainConfig config, std::span<const PointCloud> train, std::optional<std::size_t> embedding_dim = {});

  const TrainConfig& config() const { return config_; }
  PointNeXt<float>& model() { return *model_; }
  ProjectionHead<float>* projection() { return projection_ ? &*projection_ : nullptr; }
  const nn::LoadReport& init_report() const { return init_report_; }

  /// Shuffled (loop, entry) pairs of an epoch, cut into batches. A trailing
  /// batch of one is merged into the previous one.
  std::vector<std::vector<BatchItem>> epoch_batches(int epoch) const;
  /// Rotation, voxel sampling and post-voxelize augmentation for one item.
  PointCloud prepare(int epoch, const BatchItem& item) const;
  void set_epoch(int epoch);
  StepResult step(std::span<const PointCloud> clouds);
  /// Pretraining step; `triplets` are aligned with `clouds`.
  StepResult pretrain_step(std::span<const PointCloud> clouds, std::span<const EmbeddingTriplet* const> triplets);
  long long steps_taken() const { return steps_; }

 private:
  TrainConfig config_;
  std::span<const PointCloud> train_;
  std::unique_ptr<PointNeXt<float>> model_;
  std::optional<ProjectionHead<float>> projection_;
  std::variant<nn::Sgd<float>, nn::Adam<float>> optimizer_;
  std::vector<double> class_weights_;
  nn::LoadReport init_report_;
  Rng fps_rng_, dropout_rng_, image_rng_;
  int epoch_ = 0;
  long long steps_ = 0;
};

/// Mean over sub-clouds of the per-point segmentation logits, summed in
/// sub-cloud order. `subclouds[t]` lists the cloud rows of sub-cloud t and
/// `logits[t]` holds its rows x classes values.
std::vector<double> aggregate_subcloud_logits(std::size_t points, std::size_t classes,
                                              std::span<const std::vector<std::size_t>> subclouds,
                                              std::span<const std::vector<float>> logits);

struct CloudPrediction {
  std::vector<int> part_labels;    // 1..31 per point, when a seg head exists
  std::vector<double> seg_logits;  // aggregated, points x 31
  int type_label = -1;             // when a cls head exists
  std::vector<double> cls_logits;
  std::vector<double> embedding;   // normalized mean projection (pretraining)
};

/// Test-time inference: every sub-cloud of the voxel grid is run in eval
/// mode and the results are averaged. Clouds run in parallel, bounded by
/// PF_THREADS.
std::vector<CloudPrediction> predict_clouds(PointNeXt<float>& model, std::span<const PointCloud> clouds,
                                            float voxel_size, Axis up_axis = Axis::Y,
                                            const ProjectionHead<float>* projection = nullptr);

/// Metrics for whichever heads the model has. Throws on unlabeled clouds.
EvalReport evaluate(PointNeXt<float>& model, std::span<const PointCloud> clouds, const TrainConfig& config);

/// Zero-shot accuracy (percent) of projected embeddings against prompts.
double zero_shot_accuracy(PointNeXt<float>& model, const ProjectionHead<float>& projection,
                          std::span<const PointCloud> clouds, const ClassPrompts& prompts,
                          std::span<const int> candidates, const TrainConfig& config);

/// Writes <out>/<name>.labels with one predicted part label per line.
void predict(PointNeXt<float>& model, std::span<const PointCloud> clouds, const std::filesystem::path& out,
             const TrainConfig& config);

struct HistoryRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_acc, val_piou, harmonic;
};

/// Selection metric of a row: accuracy (classification, pretraining),
/// PartIoU (segmentation) or harmonic mean (multitask).
std::optional<double> selection_metric(const HistoryRow& row, Task task);
/// Index of the first row with the largest selection metric.
std::size_t select_best(std::span<const HistoryRow> history, Task task);

void write_history(const std::filesystem::path& path, std::span<const HistoryRow> history);
std::vector<HistoryRow> read_history(const std::filesystem::path& path);

struct CheckpointMetadata {
  int epoch = 0;
  std::optional<double> accuracy, part_iou, harmonic;
  std::uint64_t config_hash = 0;
  std::uint64_t parameter_checksum = 0;
  std::map<std::string, std::string> config;  // what is needed to rebuild the model
};

std::filesystem::path metadata_path(const std::filesystem::path& checkpoint);
void write_metadata(const std::filesystem::path& checkpoint, const CheckpointMetadata& meta);
CheckpointMetadata read_metadata(const std::filesystem::path& checkpoint);

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t best_index = 0;
  std::filesystem::path best_checkpoint;
  CheckpointMetadata best;
};

struct TrainHooks {
  std::function<void(const HistoryRow&)> on_epoch;
  /// Ends the run after the current epoch; the schedule is unaffected.
  std::function<bool(const HistoryRow&)> stop;
};

/// Full run: epochs of loop_factor passes, validation after each epoch,
/// best checkpoint by the task metric, history.csv in `out`.
TrainResult train(const TrainConfig& config, const Dataset& data, const std::filesystem::path& out,
                  const TrainHooks& hooks = {});

/// ULIP pretraining; validation is zero-shot accuracy over the type labels
/// present in the train split.
TrainResult pretrain(const TrainConfig& config, const Dataset& data, const std::filesystem::path& embeddings_root,
                     const std::filesystem::path& out, const TrainHooks& hooks = {});

/// Map of the run settings recorded in checkpoint metadata.
std::map<std::string, std::string> describe_config(const TrainConfig& config);
std::uint64_t config_hash(const TrainConfig& config);

/// Rebuilds a model from checkpoint metadata and loads it strictly.
std::unique_ptr<PointNeXt<float>> load_trained_model(const std::filesystem::path& checkpoint,
                                                     std::optional<ProjectionHead<float>>* projection = nullptr);

/// PF_THREADS when set and positive, otherwise the hardware concurrency.
unsigned worker_threads();

}  // namespace pf
