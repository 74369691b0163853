// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "pointforge/geometry.hpp"
#include "pointforge/synthetic.hpp"

namespace pf {

using nn::Tensor;
namespace fs = std::filesystem;

namespace {

// Random stream identifiers mixed into the run seed.
enum : std::uint64_t { kOrderStream = 1, kDataStream = 2, kFpsStream = 3, kDropoutStream = 4, kImageStream = 5 };

template <class V>
std::string num(V v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) throw ParseError(what + ": bad number '" + text + "'");
  return v;
}

std::optional<double> parse_opt(const std::string& text, const std::string& what) {
  if (text.empty()) return std::nullopt;
  return parse_double(text, what);
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::variant<nn::Sgd<float>, nn::Adam<float>> make_optimizer(const TrainConfig& c, nn::ParameterSet<float>& params) {
  if (c.optimizer == OptimizerKind::Sgd) {
    return nn::Sgd<float>(params.parameters(), nn::SgdOptions{c.lr, c.momentum, c.weight_decay});
  }
  nn::AdamOptions o;
  o.lr = c.lr;
  o.weight_decay = c.weight_decay;
  return nn::Adam<float>(params.parameters(), o);
}

std::vector<int> argmax_rows(std::span<const double> values, std::size_t cols, int shift) {
  const std::size_t rows = cols ? values.size() / cols : 0;
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = values.data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best) + shift;
  }
  return out;
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::Classification;
  if (text == "segmentation") return Task::Segmentation;
  if (text == "multitask") return Task::Multitask;
  if (text == "ulip_pretrain") return Task::UlipPretrain;
  throw ParseError("unknown task '" + std::string(text) + "'");
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Classification: return "classification";
    case Task::Segmentation: return "segmentation";
    case Task::Multitask: return "multitask";
    case Task::UlipPretrain: return "ulip_pretrain";
  }
  return "segmentation";
}

HeadKind head_for_task(Task task) {
  switch (task) {
    case Task::Classification: return HeadKind::Classification;
    case Task::Segmentation: return HeadKind::Segmentation;
    case Task::Multitask: return HeadKind::Multitask;
    case Task::UlipPretrain: return HeadKind::Encoder;
  }
  return HeadKind::Segmentation;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("epochs must be at least 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("beta must lie in [0, 1]");
  if (!(voxel_size > 0.0f)) throw Error("voxel_size must be positive");
  if (!(radius > 0.0f)) throw Error("radius must be positive");
  if (!(lr > 0.0)) throw Error("lr must be positive");
  if (min_lr < 0.0 || min_lr > lr) throw Error("min_lr must lie in [0, lr]");
  if (sample_size == 0) throw Error("sample_size must be positive");
  if (batch_size == 0) throw Error("batch_size must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw Error("weight_decay must be non-negative");
  augment.validate();
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  return model_preset(preset, head_for_task(task), radius, profile);
}

Dataset load_dataset(const fs::path& root, Axis up_axis) {
  if (!fs::is_directory(root)) throw Error("dataset directory not found: " + root.string());
  Dataset data;
  data.root = root;
  const std::pair<SplitName, std::vector<PointCloud>*> splits[] = {
      {SplitName::Train, &data.train}, {SplitName::Val, &data.val}, {SplitName::Test, &data.test}};
  for (const auto& [split, target] : splits) {
    const fs::path manifest = root / (std::string(split_name_str(split)) + ".txt");
    if (!fs::exists(manifest)) continue;
    for (const auto& entry : load_split_manifest(manifest, split).entries) {
      target->push_back(compute_heights(load_point_cloud(entry), up_axis));
    }
  }
  return data;
}

std::vector<double> segmentation_class_weights(std::span<const PointCloud> clouds) {
  const auto hist = label_histogram(clouds, LabelVocabulary::building_parts(), LabelKind::Segmentation);
  const auto w = inverse_log_frequency_weights(hist.counts, kUnspecifiedLabel);
  return std::vector<double>(w.weights.begin() + 1, w.weights.end());
}

int seg_target(int label) {
  if (label == kUnspecifiedLabel) return -1;
  if (label < 1 || label > kNumPartClasses) throw Error("part label out of range: " + std::to_string(label));
  return label - 1;
}

TrainingDiverged::TrainingDiverged(int epoch_, long long step_, const std::string& what)
    : Error(what), epoch(epoch_), step(step_) {}

Trainer::Trainer(TrainConfig config, std::span<const PointCloud> train, std::optional<std::size_t> embedding_dim)
    : config_((config.validate(), std::move(config))),
      train_(train),
      model_(std::make_unique<PointNeXt<float>>(config_.model_config(), config_.seed)),
      projection_(embedding_dim ? std::optional<ProjectionHead<float>>(std::in_place, model_->params(),
                                                                       model_->config().encoder_width(),
                                                                       *embedding_dim, config_.seed)
                                : std::nullopt),
      optimizer_(make_optimizer(config_, model_->params())),
      fps_rng_(derive_seed(config_.seed, {kFpsStream})),
      dropout_rng_(derive_seed(config_.seed, {kDropoutStream})),
      image_rng_(derive_seed(config_.seed, {kImageStream})) {
  if (train_.empty()) throw Error("training split is empty");
  if (model_->config().has_seg_head()) class_weights_ = segmentation_class_weights(train_);
  if (config_.init) init_report_ = load_checkpoint(*model_, *config_.init, config_.strict);
  set_epoch(0);
}

std::vector<std::vector<BatchItem>> Trainer::epoch_batches(int epoch) const {
  std::vector<BatchItem> items;
  for (int loop = 0; loop < config_.augment.loop_factor; ++loop) {
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config_.seed, {kOrderStream, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(loop)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t e : order) items.push_back({loop, e});
  }
  std::vector<std::vector<BatchItem>> batches;
  for (std::size_t i = 0; i < items.size(); i += config_.batch_size) {
    const std::size_t end = std::min(items.size(), i + config_.batch_size);
    batches.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

PointCloud Trainer::prepare(int epoch, const BatchItem& item) const {
  Rng rng(derive_seed(config_.seed, {kDataStream, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(item.loop), item.entry}));
  const Axis up = config_.augment.up_axis;
  const PointCloud rotated = apply_pipeline(train_[item.entry], config_.augment, AugmentStage::PreVoxelize, rng);
  const VoxelGrid grid = build_voxel_grid(rotated, config_.voxel_size);
  const auto rows = sample_train_subcloud(grid, config_.sample_size, rng);
  PointCloud sub = apply_pipeline(rotated.subset(rows), config_.augment, AugmentStage::PostVoxelize, rng);
  return compute_heights(sub, up);
}

void Trainer::set_epoch(int epoch) {
  epoch_ = epoch;
  const double lr = nn::cosine_lr(nn::LrSchedule{config_.lr, config_.epochs, config_.schedule, config_.min_lr}, epoch);
  std::visit([lr](auto& opt) { opt.set_lr(lr); }, optimizer_);
}

StepResult Trainer::step(std::span<const PointCloud> clouds) {
  if (clouds.empty()) throw Error("step: empty batch");
  const ModelConfig& mc = model_->config();
  if (mc.head == HeadKind::Encoder) throw Error("step: encoder-only model needs pretrain_step");
  const Batch batch = make_batch(clouds, config_.augment.up_axis);
  ForwardOptions options;
  options.training = true;
  options.fps_start = config_.deterministic ? StartPolicy::Deterministic : StartPolicy::Random;
  options.fps_rng = &fps_rng_;
  options.dropout_rng = &dropout_rng_;
  const ModelOutput<float> out = model_->forward(batch, options);

  StepResult result;
  Tensor<float> cls_loss, seg_loss, loss;
  if (mc.has_cls_head()) {
    std::vector<int> targets;
    for (const auto& c : clouds) {
      if (!c.type_label) throw Error("step: cloud '" + c.name + "' has no type label");
      targets.push_back(*c.type_label);
    }
    cls_loss = nn::softmax_cross_entropy(out.cls_logits, targets);
    result.cls_loss = cls_loss.item();
  }
  if (mc.has_seg_head()) {
    std::vector<int> targets;
    targets.reserve(batch.rows());
    for (const auto& c : clouds) {
      if (!c.seg_labels) throw Error("step: cloud '" + c.name + "' has no part labels");
      for (int l : *c.seg_labels) targets.push_back(seg_target(l));
    }
    seg_loss = nn::softmax_cross_entropy(out.seg_logits, targets, class_weights_, -1);
    result.seg_loss = seg_loss.item();
  }
  if (mc.head == HeadKind::Multitask) {
    loss = multitask_loss(cls_loss, seg_loss, config_.beta);
  } else {
    loss = mc.has_cls_head() ? cls_loss : seg_loss;
  }
  result.loss = loss.item();
  if (!std::isfinite(result.loss)) {
    throw TrainingDiverged(epoch_ + 1, steps_ + 1,
                           "loss is not finite at epoch " + std::to_string(epoch_ + 1) + ", step " +
                               std::to_string(steps_ + 1));
  }
  model_->params().zero_grad();
  loss.backward();
  std::visit([](auto& opt) { opt.step(); }, optimizer_);
  ++steps_;
  return result;
}

StepResult Trainer::pretrain_step(std::span<const PointCloud> clouds, std::span<const EmbeddingTriplet* const> triplets) {
  if (!projection_) throw Error("pretrain_step: trainer has no projection head");
  if (clouds.size() != triplets.size()) throw Error("pretrain_step: cloud and embedding counts differ");
  std::vector<PretrainSample> samples;
  for (std::size_t i = 0; i < clouds.size(); ++i) samples.push_back({clouds[i], triplets[i]});
  ForwardOptions options;
  options.training = true;
  options.fps_start = config_.deterministic ? StartPolicy::Deterministic : StartPolicy::Random;
  options.fps_rng = &fps_rng_;
  options.dropout_rng = &dropout_rng_;
  PretrainStepResult r;
  try {
    r = std::visit(
        [&](auto& opt) {
          return pf::pretrain_step(*model_, *projection_, opt, samples, options, image_rng_, config_.augment.up_axis);
        },
        optimizer_);
  } catch (const TrainingDiverged&) {
    throw;
  } catch (const Error& e) {
    if (std::string(e.what()).find("not finite") == std::string::npos) throw;
    throw TrainingDiverged(epoch_ + 1, steps_ + 1,
                           "loss is not finite at epoch " + std::to_string(epoch_ + 1) + ", step " +
                               std::to_string(steps_ + 1));
  }
  ++steps_;
  return StepResult{r.loss, r.text_loss, r.image_loss};
}

std::vector<double> aggregate_subcloud_logits(std::size_t points, std::size_t classes,
                                              std::span<const std::vector<std::size_t>> subclouds,
                                              std::span<const std::vector<float>> logits) {
  if (subclouds.size() != logits.size()) throw Error("aggregate: sub-cloud and logit counts differ");
  std::vector<double> sum(points * classes, 0.0);
  std::vector<std::size_t> count(points, 0);
  for (std::size_t t = 0; t < subclouds.size(); ++t) {
    const auto& rows = subclouds[t];
    if (logits[t].size() != rows.size() * classes) throw Error("aggregate: logit block has the wrong size");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= points) throw Error("aggregate: row index out of range");
      double* dst = sum.data() + rows[r] * classes;
      const float* src = logits[t].data() + r * classes;
      for (std::size_t c = 0; c < classes; ++c) dst[c] += src[c];
      ++count[rows[r]];
    }
  }
  for (std::size_t p = 0; p < points; ++p) {
    if (count[p] == 0) throw Error("aggregate: point " + std::to_string(p) + " is not covered by any sub-cloud");
    for (std::size_t c = 0; c < classes; ++c) sum[p * classes + c] /= static_cast<double>(count[p]);
  }
  return sum;
}

std::vector<CloudPrediction> predict_clouds(PointNeXt<float>& model, std::span<const PointCloud> clouds,
                                            float voxel_size, Axis up_axis, const ProjectionHead<float>* projection) {
  const ModelConfig& mc = model.config();
  std::vector<CloudPrediction> preds(clouds.size());
  parallel_for(clouds.size(), [&](std::size_t i) {
    nn::NoGradGuard guard;
    const PointCloud& cloud = clouds[i];
    const auto subclouds = enumerate_test_subclouds(build_voxel_grid(cloud, voxel_size));
    std::vector<std::vector<float>> seg_blocks;
    std::vector<double> cls_sum(mc.has_cls_head() ? mc.num_classes : 0, 0.0);
    std::vector<double> emb_sum;
    for (const auto& rows : subclouds) {
      const PointCloud sub = compute_heights(cloud.subset(rows), up_axis);
      const Batch batch = make_batch(std::span<const PointCloud>(&sub, 1), up_axis);
      const ModelOutput<float> out = model.forward(batch, ForwardOptions{});
      if (mc.has_seg_head()) seg_blocks.emplace_back(out.seg_logits.data().begin(), out.seg_logits.data().end());
      if (mc.has_cls_head()) {
        for (std::size_t c = 0; c < cls_sum.size(); ++c) cls_sum[c] += out.cls_logits.data()[c];
      }
      if (projection) {
        const Tensor<float> p = (*projection)(out.global);
        if (emb_sum.empty()) emb_sum.assign(p.size(), 0.0);
        for (std::size_t c = 0; c < p.size(); ++c) emb_sum[c] += p.data()[c];
      }
    }
    CloudPrediction& pred = preds[i];
    if (mc.has_seg_head()) {
      pred.seg_logits = aggregate_subcloud_logits(cloud.size(), mc.num_parts, subclouds, seg_blocks);
      pred.part_labels = argmax_rows(pred.seg_logits, mc.num_parts, 1);
    }
    if (mc.has_cls_head()) {
      for (double& v : cls_sum) v /= static_cast<double>(subclouds.size());
      pred.type_label = argmax_rows(cls_sum, cls_sum.size(), 0).front();
      pred.cls_logits = std::move(cls_sum);
    }
    if (projection) {
      double norm = 0.0;
      for (double v : emb_sum) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& v : emb_sum) v /= norm;
      }
      pred.embedding = std::move(emb_sum);
    }
  });
  return preds;
}

EvalReport evaluate(PointNeXt<float>& model, std::span<const PointCloud> clouds, const TrainConfig& config) {
  if (clouds.empty()) throw Error("evaluate: split is empty");
  const ModelConfig& mc = model.config();
  for (const auto& c : clouds) {
    if (mc.has_cls_head() && !c.type_label) throw Error("evaluate: cloud '" + c.name + "' has no type label");
    if (mc.has_seg_head() && !c.seg_labels) throw Error("evaluate: cloud '" + c.name + "' has no part labels");
  }
  const auto preds = predict_clouds(model, clouds, config.voxel_size, config.augment.up_axis);
  EvalReport report;
  if (mc.has_cls_head()) {
    std::vector<int> p, t;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      p.push_back(preds[i].type_label);
      t.push_back(*clouds[i].type_label);
    }
    report.overall_accuracy = overall_accuracy(p, t);
  }
  if (mc.has_seg_head()) {
    std::vector<std::vector<int>> p, t;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      p.push_back(preds[i].part_labels);
      t.push_back(*clouds[i].seg_labels);
    }
    const auto piou = part_iou(p, t, kNumPartLabels, kUnspecifiedLabel, config.iou_mode);
    report.per_class_iou = piou.per_class_iou;
    report.part_iou = piou.part_iou;
    report.shape_iou = shape_iou(p, t, kNumPartLabels, kUnspecifiedLabel);
  }
  if (report.overall_accuracy && report.part_iou) {
    report.harmonic_mean = harmonic_mean(*report.overall_accuracy, *report.part_iou);
  }
  return report;
}

double zero_shot_accuracy(PointNeXt<float>& model, const ProjectionHead<float>& projection,
                          std::span<const PointCloud> clouds, const ClassPrompts& prompts,
                          std::span<const int> candidates, const TrainConfig& config) {
  if (clouds.empty()) throw Error("zero-shot: split is empty");
  const auto preds = predict_clouds(model, clouds, config.voxel_size, config.augment.up_axis, &projection);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (!clouds[i].type_label) throw Error("zero-shot: cloud '" + clouds[i].name + "' has no type label");
    if (zero_shot_classify(preds[i].embedding, prompts, candidates).top1 == *clouds[i].type_label) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(clouds.size());
}

void predict(PointNeXt<float>& model, std::span<const PointCloud> clouds, const fs::path& out,
             const TrainConfig& config) {
  if (!model.config().has_seg_head()) throw Error("predict: model has no segmentation head");
  fs::create_directories(out);
  const auto preds = predict_clouds(model, clouds, config.voxel_size, config.augment.up_axis);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (clouds[i].name.empty()) throw Error("predict: cloud " + std::to_string(i) + " has no name");
    std::string text;
    text.reserve(preds[i].part_labels.size() * 3);
    for (int l : preds[i].part_labels) {
      text += std::to_string(l);
      text += '\n';
    }
    std::ofstream f(out / (clouds[i].name + ".labels"), std::ios::binary);
    f << text;
    if (!f) throw Error("predict: cannot write labels for '" + clouds[i].name + "'");
  }
}

std::optional<double> selection_metric(const HistoryRow& row, Task task) {
  switch (task) {
    case Task::Classification:
    case Task::UlipPretrain: return row.val_acc;
    case Task::Segmentation: return row.val_piou;
    case Task::Multitask: return row.harmonic;
  }
  return std::nullopt;
}

std::size_t select_best(std::span<const HistoryRow> history, Task task) {
  if (history.empty()) throw Error("select_best: empty history");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto m = selection_metric(history[i], task);
    if (m && (!best || *m > *selection_metric(history[*best], task))) best = i;
  }
  return best.value_or(history.size() - 1);
}

void write_history(const fs::path& path, std::span<const HistoryRow> history) {
  std::ostringstream s;
  s << "epoch,lr,train_loss,val_acc,val_piou,harmonic\n";
  for (const auto& r : history) {
    s << r.epoch << ',' << num(r.lr) << ',' << num(r.train_loss) << ',' << opt_num(r.val_acc) << ','
      << opt_num(r.val_piou) << ',' << opt_num(r.harmonic) << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  f << s.str();
  if (!f) throw Error("cannot write history " + path.string());
}

std::vector<HistoryRow> read_history(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open history " + path.string());
  std::string line;
  if (!std::getline(f, line) || trim(line) != "epoch,lr,train_loss,val_acc,val_piou,harmonic") {
    throw ParseError(path.string() + ": bad history header");
  }
  std::vector<HistoryRow> rows;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(trim(c));
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    if (cols.size() != 6) throw ParseError(path.string() + ": expected 6 columns in '" + line + "'");
    HistoryRow r;
    r.epoch = static_cast<int>(parse_double(cols[0], "epoch"));
    r.lr = parse_double(cols[1], "lr");
    r.train_loss = parse_double(cols[2], "train_loss");
    r.val_acc = parse_opt(cols[3], "val_acc");
    r.val_piou = parse_opt(cols[4], "val_piou");
    r.harmonic = parse_opt(cols[5], "harmonic");
    rows.push_back(r);
  }
  return rows;
}

fs::path metadata_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".meta");
  return p;
}

void write_metadata(const fs::path& checkpoint, const CheckpointMetadata& meta) {
  std::ostringstream s;
  s << "epoch=" << meta.epoch << '\n';
  s << "accuracy=" << opt_num(meta.accuracy) << '\n';
  s << "part_iou=" << opt_num(meta.part_iou) << '\n';
  s << "harmonic=" << opt_num(meta.harmonic) << '\n';
  s << "config_hash=" << hex(meta.config_hash) << '\n';
  s << "parameter_checksum=" << hex(meta.parameter_checksum) << '\n';
  for (const auto& [k, v] : meta.config) s << "config." << k << '=' << v << '\n';
  std::ofstream f(metadata_path(checkpoint), std::ios::binary);
  f << s.str();
  if (!f) throw Error("cannot write checkpoint metadata for " + checkpoint.string());
}

CheckpointMetadata read_metadata(const fs::path& checkpoint) {
  const fs::path path = metadata_path(checkpoint);
  std::ifstream f(path);
  if (!f) throw Error("cannot open checkpoint metadata " + path.string());
  CheckpointMetadata meta;
  std::string line;
  while (std::getline(f, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ": expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = trim(line.substr(eq + 1));
    if (key == "epoch") {
      meta.epoch = static_cast<int>(parse_double(value, key));
    } else if (key == "accuracy") {
      meta.accuracy = parse_opt(value, key);
    } else if (key == "part_iou") {
      meta.part_iou = parse_opt(value, key);
    } else if (key == "harmonic") {
      meta.harmonic = parse_opt(value, key);
    } else if (key == "config_hash" || key == "parameter_checksum") {
      std::uint64_t v = 0;
      const auto res = std::from_chars(value.data(), value.data() + value.size(), v, 16);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) throw ParseError(path.string() + ": bad " + key);
      (key == "config_hash" ? meta.config_hash : meta.parameter_checksum) = v;
    } else if (key.rfind("config.", 0) == 0) {
      meta.config[key.substr(7)] = value;
    } else {
      throw ParseError(path.string() + ": unknown key '" + key + "'");
    }
  }
  return meta;
}

std::map<std::string, std::string> describe_config(const TrainConfig& c) {
  std::map<std::string, std::string> m;
  m["task"] = task_name(c.task);
  m["epochs"] = std::to_string(c.epochs);
  m["lr"] = num(c.lr);
  m["min_lr"] = num(c.min_lr);
  m["schedule"] = c.schedule == nn::ScheduleKind::Cosine ? "cosine" : "constant";
  m["optimizer"] = c.optimizer == OptimizerKind::Sgd ? "sgd" : "adam";
  m["momentum"] = num(c.momentum);
  m["weight_decay"] = num(c.weight_decay);
  m["beta"] = num(c.beta);
  m["voxel_size"] = num(c.voxel_size);
  m["sample_size"] = std::to_string(c.sample_size);
  m["radius"] = num(c.radius);
  m["batch_size"] = std::to_string(c.batch_size);
  m["loop_factor"] = std::to_string(c.augment.loop_factor);
  m["up_axis"] = axis_name(c.augment.up_axis);
  m["preset"] = c.preset;
  m["profile"] = c.profile == StrideProfile::Seg ? "seg" : "cls";
  m["seed"] = std::to_string(c.seed);
  m["deterministic"] = c.deterministic ? "true" : "false";
  m["iou_mode"] = c.iou_mode == IouMode::Pooled ? "pooled" : "per_building";
  m["rotation"] = c.augment.rotation_enabled ? "true" : "false";
  m["scale_lo"] = num(c.augment.scale_lo);
  m["scale_hi"] = num(c.augment.scale_hi);
  m["jitter_sigma"] = num(c.augment.jitter_sigma);
  m["jitter_clip"] = num(c.augment.jitter_clip);
  m["color_drop"] = num(c.augment.color_drop_prob);
  m["color_contrast"] = num(c.augment.color_contrast_prob);
  m["contrast_blend"] = num(c.augment.contrast_blend);
  if (c.init) m["init"] = c.init->string();
  m["strict"] = c.strict ? "true" : "false";
  return m;
}

std::uint64_t config_hash(const TrainConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : describe_config(config)) {
    h = fnv1a64(k.data(), k.size(), h);
    h = fnv1a64("=", 1, h);
    h = fnv1a64(v.data(), v.size(), h);
    h = fnv1a64("\n", 1, h);
  }
  return h;
}

std::unique_ptr<PointNeXt<float>> load_trained_model(const fs::path& checkpoint,
                                                     std::optional<ProjectionHead<float>>* projection) {
  const CheckpointMetadata meta = read_metadata(checkpoint);
  const auto get = [&](const std::string& key) {
    const auto it = meta.config.find(key);
    if (it == meta.config.end()) throw Error("checkpoint metadata lacks config." + key);
    return it->second;
  };
  const Task task = parse_task(get("task"));
  const StrideProfile profile = get("profile") == "cls" ? StrideProfile::Cls : StrideProfile::Seg;
  const float radius = static_cast<float>(parse_double(get("radius"), "radius"));
  const ModelConfig mc = model_preset(get("preset"), head_for_task(task), radius, profile);
  auto model = std::make_unique<PointNeXt<float>>(mc, 0);
  const auto dim_it = meta.config.find("embedding_dim");
  if (dim_it != meta.config.end()) {
    const auto dim = static_cast<std::size_t>(parse_double(dim_it->second, "embedding_dim"));
    if (!projection) throw Error("checkpoint carries a projection head; pass a slot for it");
    projection->emplace(model->params(), mc.encoder_width(), dim, 0);
  }
  load_checkpoint(*model, checkpoint, true);
  if (parameter_checksum(model->params()) != meta.parameter_checksum) {
    throw FormatError("checkpoint parameters do not match the checksum in " + metadata_path(checkpoint).string());
  }
  return model;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("PF_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Shared epoch loop for supervised training and pretraining.
template <class StepFn, class ValidateFn>
TrainResult run_epochs(Trainer& trainer, const fs::path& out, const TrainHooks& hooks,
                       std::map<std::string, std::string> described, StepFn&& step_fn, ValidateFn&& validate) {
  const TrainConfig& config = trainer.config();
  fs::create_directories(out);
  TrainResult result;
  result.best_checkpoint = out / "best.pfckpt";
  std::optional<double> best_metric;
  bool saved = false;
  const fs::path history_path = out / "history.csv";
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    trainer.set_epoch(epoch);
    HistoryRow row;
    row.epoch = epoch + 1;
    row.lr = nn::cosine_lr(nn::LrSchedule{config.lr, config.epochs, config.schedule, config.min_lr}, epoch);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    try {
      for (const auto& items : trainer.epoch_batches(epoch)) {
        std::vector<PointCloud> clouds;
        clouds.reserve(items.size());
        for (const auto& item : items) clouds.push_back(trainer.prepare(epoch, item));
        loss_sum += step_fn(clouds, items).loss;
        ++steps;
      }
    } catch (const TrainingDiverged&) {
      write_history(history_path, result.history);
      throw;
    }
    row.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
    validate(row);
    result.history.push_back(row);
    write_history(history_path, result.history);

    const auto metric = selection_metric(row, config.task);
    if (!saved || (metric && (!best_metric || *metric > *best_metric)) || (!metric && !best_metric)) {
      if (metric) best_metric = metric;
      CheckpointMetadata meta;
      meta.epoch = row.epoch;
      meta.accuracy = row.val_acc;
      meta.part_iou = row.val_piou;
      meta.harmonic = row.harmonic;
      meta.config_hash = config_hash(config);
      meta.parameter_checksum = parameter_checksum(trainer.model().params());
      meta.config = described;
      save_model(trainer.model(), result.best_checkpoint);
      write_metadata(result.best_checkpoint, meta);
      result.best = meta;
      result.best_index = result.history.size() - 1;
      saved = true;
    }
    if (hooks.on_epoch) hooks.on_epoch(row);
    if (hooks.stop && hooks.stop(row)) break;
  }
  const fs::path last = out / "last.pfckpt";
  CheckpointMetadata last_meta = result.best;
  const HistoryRow& tail = result.history.back();
  last_meta.epoch = tail.epoch;
  last_meta.accuracy = tail.val_acc;
  last_meta.part_iou = tail.val_piou;
  last_meta.harmonic = tail.harmonic;
  last_meta.parameter_checksum = parameter_checksum(trainer.model().params());
  save_model(trainer.model(), last);
  write_metadata(last, last_meta);
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& data, const fs::path& out, const TrainHooks& hooks) {
  if (config.task == Task::UlipPretrain) throw Error("train: use pretrain for the ulip_pretrain task");
  Trainer trainer(config, data.train);
  return run_epochs(
      trainer, out, hooks, describe_config(config),
      [&](const std::vector<PointCloud>& clouds, const std::vector<BatchItem>&) { return trainer.step(clouds); },
      [&](HistoryRow& row) {
        if (data.val.empty()) return;
        const EvalReport r = evaluate(trainer.model(), data.val, config);
        row.val_acc = r.overall_accuracy;
        row.val_piou = r.part_iou;
        row.harmonic = r.harmonic_mean;
      });
}

TrainResult pretrain(const TrainConfig& config, const Dataset& data, const fs::path& embeddings_root,
                     const fs::path& out, const TrainHooks& hooks) {
  if (config.task != Task::UlipPretrain) throw Error("pretrain: task must be ulip_pretrain");
  std::vector<EmbeddingTriplet> triplets;
  for (const auto& c : data.train) triplets.push_back(load_embedding(embedding_path(embeddings_root, c.name)));
  if (triplets.empty()) throw Error("pretrain: training split is empty");
  const std::size_t dim = triplets.front().dim;
  for (const auto& t : triplets) {
    if (t.dim != dim) throw Error("pretrain: embedding widths differ ('" + t.name + "')");
  }
  const ClassPrompts prompts = load_class_prompts(embeddings_root / "class_prompts.pfcls");
  if (prompts.dim != dim) throw Error("pretrain: class prompts and embeddings differ in width");
  std::set<int> present;
  for (const auto& c : data.train) {
    if (c.type_label) present.insert(*c.type_label);
  }
  const std::vector<int> candidates(present.begin(), present.end());

  Trainer trainer(config, data.train, dim);
  auto described = describe_config(config);
  described["embedding_dim"] = std::to_string(dim);
  return run_epochs(
      trainer, out, hooks, described,
      [&](const std::vector<PointCloud>& clouds, const std::vector<BatchItem>& items) {
        std::vector<const EmbeddingTriplet*> ptrs;
        for (const auto& item : items) ptrs.push_back(&triplets[item.entry]);
        return trainer.pretrain_step(clouds, ptrs);
      },
      [&](HistoryRow& row) {
        if (data.val.empty()) return;
        row.val_acc = zero_shot_accuracy(trainer.model(), *trainer.projection(), data.val, prompts, candidates, config);
      });
}

}  // namespace pf
