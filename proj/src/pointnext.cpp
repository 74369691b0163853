// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/pointnext.hpp"

#include <cmath>
#include <numeric>

namespace pf {

using nn::Tensor;

void append_cloud(Batch& batch, const PointCloud& cloud, Axis up_axis) {
  constexpr std::size_t kChannels = kDefaultInputChannels;
  if (cloud.size() == 0) throw Error("append_cloud: empty cloud '" + cloud.name + "'");
  if (batch.channels == 0) batch.channels = kChannels;
  if (batch.channels != kChannels) throw Error("append_cloud: channel layout mismatch");
  std::vector<float> derived;
  const std::vector<float>* heights = cloud.heights ? &*cloud.heights : nullptr;
  if (!heights) {
    derived = *compute_heights(cloud, up_axis).heights;
    heights = &derived;
  }
  const std::size_t n = cloud.size();
  batch.features.reserve(batch.features.size() + n * kChannels);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 zero{0.0f, 0.0f, 0.0f};
    const Vec3& nrm = cloud.normals ? (*cloud.normals)[i] : zero;
    const Vec3& col = cloud.colors ? (*cloud.colors)[i] : zero;
    const Vec3& p = cloud.coords[i];
    batch.features.insert(batch.features.end(),
                          {nrm[0], nrm[1], nrm[2], col[0], col[1], col[2], (*heights)[i], p[0], p[1], p[2]});
  }
  batch.coords.insert(batch.coords.end(), cloud.coords.begin(), cloud.coords.end());
  batch.offsets.push_back(batch.coords.size());
}

Batch make_batch(std::span<const PointCloud> clouds, Axis up_axis) {
  Batch batch;
  for (const auto& c : clouds) append_cloud(batch, c, up_axis);
  return batch;
}

namespace {

void append_group(GroupPlan& plan, const NeighborIndex& idx, std::size_t base, float radius) {
  plan.k = idx.neighbors_per_centroid;
  for (std::size_t v : idx.neighbor_indices) plan.neighbors.push_back(v + base);
  const float inv = 1.0f / radius;
  for (const Vec3& o : idx.neighbor_offsets) {
    plan.offsets.push_back(o[0] * inv);
    plan.offsets.push_back(o[1] * inv);
    plan.offsets.push_back(o[2] * inv);
  }
}

}  // namespace

GeometryPlan plan_geometry(const ModelConfig& config, std::span<const Vec3> coords,
                           std::span<const std::size_t> offsets, const ForwardOptions& options,
                           bool with_decoder) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != coords.size()) {
    throw Error("plan_geometry: offsets do not cover the coordinates");
  }
  if (options.fps_start == StartPolicy::Random && !options.fps_rng) {
    throw Error("plan_geometry: random FPS start needs a random stream");
  }
  GeometryPlan plan;
  plan.levels.resize(config.stages.size() + 1);
  plan.levels[0].coords.assign(coords.begin(), coords.end());
  plan.levels[0].offsets.assign(offsets.begin(), offsets.end());
  const std::size_t clouds = offsets.size() - 1;

  for (std::size_t t = 0; t < config.stages.size(); ++t) {
    const StageConfig& stage = config.stages[t];
    const LevelPlan& prev = plan.levels[t];
    LevelPlan& level = plan.levels[t + 1];
    level.offsets.push_back(0);
    for (std::size_t b = 0; b < clouds; ++b) {
      const std::size_t lo = prev.offsets[b];
      const std::span<const Vec3> seg(prev.coords.data() + lo, prev.offsets[b + 1] - lo);
      const auto picks = farthest_point_sampling(seg, stage.stride, options.fps_start, options.fps_rng);
      const auto down = ball_query(seg, picks, stage.radius, stage.neighbors);
      append_group(level.down, down, lo, stage.radius);
      const std::size_t base = level.coords.size();
      for (std::size_t i : picks) {
        level.sampled.push_back(i + lo);
        level.coords.push_back(seg[i]);
      }
      level.offsets.push_back(level.coords.size());
      if (stage.blocks > 0) {
        const std::span<const Vec3> sub(level.coords.data() + base, picks.size());
        std::vector<std::size_t> all(picks.size());
        std::iota(all.begin(), all.end(), 0);
        append_group(level.local, ball_query(sub, all, stage.radius, stage.neighbors), base, stage.radius);
      }
    }
  }

  if (with_decoder) {
    const std::size_t k = config.fp_neighbors;
    plan.up.resize(config.stages.size());
    for (std::size_t t = 0; t < config.stages.size(); ++t) {
      const LevelPlan& fine = plan.levels[t];
      const LevelPlan& coarse = plan.levels[t + 1];
      InterpPlan& up = plan.up[t];
      up.k = k;
      for (std::size_t b = 0; b < clouds; ++b) {
        const std::size_t clo = coarse.offsets[b];
        const std::size_t cn = coarse.offsets[b + 1] - clo;
        const std::size_t flo = fine.offsets[b];
        const std::span<const Vec3> src(coarse.coords.data() + clo, cn);
        const std::span<const Vec3> dst(fine.coords.data() + flo, fine.offsets[b + 1] - flo);
        const std::size_t keff = std::min(k, cn);
        const auto w = inverse_distance_weights(src, dst, keff);
        for (std::size_t i = 0; i < dst.size(); ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            // Clouds with fewer than k coarse points pad with zero weight.
            const std::size_t jj = j < keff ? j : 0;
            up.indices.push_back(w.indices[i * keff + jj] + clo);
            up.weights.push_back(j < keff ? w.weights[i * keff + j] : 0.0);
          }
        }
      }
    }
  }
  return plan;
}

template <class T>
Tensor<T> init_uniform(const std::string& name, nn::Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {fnv1a64(name.data(), name.size())}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(nn::numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(values));
}

template <class T>
MlpUnit<T>::MlpUnit(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin, std::size_t cout,
                    bool norm, bool relu_on, std::uint64_t seed)
    : relu(relu_on) {
  weight = params.add_parameter(name + ".weight", init_uniform<T>(name + ".weight", {cin, cout}, cin, seed), false);
  if (norm) {
    gamma = params.add_parameter(name + ".bn.gamma", Tensor<T>(nn::Shape{cout}, T(1)), true);
    beta = params.add_parameter(name + ".bn.beta", Tensor<T>(nn::Shape{cout}, T(0)), true);
    bn.emplace(cout);
    params.add_buffer(name + ".bn.running_mean", bn->running_mean);
    params.add_buffer(name + ".bn.running_var", bn->running_var);
  } else {
    bias = params.add_parameter(name + ".bias", init_uniform<T>(name + ".bias", {cout}, cin, seed), true);
  }
}

template <class T>
Tensor<T> MlpUnit<T>::operator()(const Tensor<T>& x, bool training) {
  Tensor<T> y = nn::dense(x, weight, bias);
  if (bn) y = nn::batch_norm(y, gamma, beta, *bn, training);
  if (relu) y = nn::relu(y);
  return y;
}

template <class T>
Tensor<T> group_features(const Tensor<T>& x, const GroupPlan& plan) {
  const std::size_t rows = plan.neighbors.size() / plan.k;
  std::vector<T> off(plan.offsets.begin(), plan.offsets.end());
  Tensor<T> rel(nn::Shape{rows, plan.k, 3}, std::move(off));
  return nn::concat_last(rel, nn::gather_rows(x, plan.neighbors, nn::Shape{rows, plan.k}));
}

template <class T>
SetAbstraction<T>::SetAbstraction(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin,
                                  std::size_t cout, std::uint64_t seed)
    : mlp(params, name, cin + 3, cout, true, true, seed) {}

template <class T>
Tensor<T> SetAbstraction<T>::operator()(const Tensor<T>& x, const LevelPlan& level, bool training) {
  return nn::max_reduce_neighbors(mlp(group_features(x, level.down), training)).values;
}

template <class T>
InvResBlock<T>::InvResBlock(nn::ParameterSet<T>& params, const std::string& name, std::size_t cin, std::size_t cout,
                            std::size_t expansion, std::uint64_t seed)
    : group(params, name + ".group", cin + 3, cin, true, true, seed),
      expand(params, name + ".expand", cin, cin * expansion, true, true, seed),
      reduce(params, name + ".reduce", cin * expansion, cout, true, false, seed) {
  if (cin != cout) shortcut.emplace(params, name + ".shortcut", cin, cout, false, false, seed);
}

template <class T>
Tensor<T> InvResBlock<T>::operator()(const Tensor<T>& x, const LevelPlan& level, bool training) {
  Tensor<T> h = nn::max_reduce_neighbors(group(group_features(x, level.local), training)).values;
  h = reduce(expand(h, training), training);
  return nn::add(h, shortcut ? (*shortcut)(x, training) : x);
}

template <class T>
FeaturePropagation<T>::FeaturePropagation(nn::ParameterSet<T>& params, const std::string& name,
                                          std::size_t coarse_width, std::size_t skip_width, std::size_t cout,
                                          std::uint64_t seed)
    : mlp(params, name, coarse_width + skip_width, cout, true, true, seed) {}

template <class T>
Tensor<T> FeaturePropagation<T>::operator()(const Tensor<T>& coarse, const Tensor<T>& skip, const InterpPlan& plan,
                                            bool training) {
  return mlp(nn::concat_last(nn::weighted_gather(coarse, plan.indices, plan.weights, plan.k), skip), training);
}

template <class T>
PointNeXt<T>::PointNeXt(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  config_.validate();
  const auto& c = config_;
  stem_ = MlpUnit<T>(params_, "stem", c.input_channels, c.stem_width, true, true, seed);
  std::vector<std::size_t> widths{c.stem_width};
  for (std::size_t t = 0; t < c.stages.size(); ++t) {
    const auto& s = c.stages[t];
    const std::string name = "enc" + std::to_string(t);
    sa_.emplace_back(params_, name + ".sa", widths.back(), s.width, seed);
    blocks_.emplace_back();
    for (int b = 0; b < s.blocks; ++b) {
      blocks_.back().emplace_back(params_, name + ".block" + std::to_string(b), s.width, s.width, c.expansion, seed);
    }
    widths.push_back(s.width);
  }
  if (c.has_cls_head()) {
    std::size_t w = c.encoder_width();
    for (std::size_t i = 0; i < c.cls_hidden.size(); ++i) {
      cls_hidden_.emplace_back(params_, "cls.fc" + std::to_string(i), w, c.cls_hidden[i], true, true, seed);
      w = c.cls_hidden[i];
    }
    cls_out_ = MlpUnit<T>(params_, "cls.out", w, c.num_classes, false, false, seed);
  }
  if (c.has_seg_head()) {
    fp_.resize(c.stages.size());
    std::size_t coarse = widths.back();
    for (std::size_t t = c.stages.size(); t-- > 0;) {
      fp_[t] = FeaturePropagation<T>(params_, "dec" + std::to_string(t), coarse, widths[t], widths[t], seed);
      coarse = widths[t];
    }
    seg_hidden_ = MlpUnit<T>(params_, "seg.fc", c.stem_width, c.stem_width, true, true, seed);
    seg_out_ = MlpUnit<T>(params_, "seg.out", c.stem_width, c.num_parts, false, false, seed);
  }
}

template <class T>
Tensor<T> PointNeXt<T>::input_tensor(const Batch& batch) const {
  if (batch.channels != config_.input_channels) {
    throw Error("model expects " + std::to_string(config_.input_channels) + " input channels, batch has " +
                std::to_string(batch.channels));
  }
  std::vector<T> values(batch.features.begin(), batch.features.end());
  return Tensor<T>(nn::Shape{batch.rows(), batch.channels}, std::move(values));
}

template <class T>
EncoderOutput<T> PointNeXt<T>::encode(const Batch& batch, const GeometryPlan& plan, bool training) {
  EncoderOutput<T> out;
  out.features.push_back(stem_(input_tensor(batch), training));
  for (std::size_t t = 0; t < sa_.size(); ++t) {
    const LevelPlan& level = plan.levels[t + 1];
    Tensor<T> x = sa_[t](out.features.back(), level, training);
    for (auto& block : blocks_[t]) x = block(x, level, training);
    out.features.push_back(x);
  }
  if (config_.head != HeadKind::Segmentation) {
    out.global = nn::segment_max(out.features.back(), plan.levels.back().offsets);
  }
  return out;
}

template <class T>
ModelOutput<T> PointNeXt<T>::forward(const Batch& batch, const ForwardOptions& options) {
  const GeometryPlan plan = plan_geometry(config_, batch.coords, batch.offsets, options, config_.has_seg_head());
  return forward(batch, plan, options);
}

template <class T>
ModelOutput<T> PointNeXt<T>::forward(const Batch& batch, const GeometryPlan& plan, const ForwardOptions& options) {
  const bool training = options.training;
  EncoderOutput<T> enc = encode(batch, plan, training);
  ModelOutput<T> out;
  out.global = enc.global;
  if (config_.has_cls_head()) {
    Tensor<T> h = enc.global;
    for (auto& unit : cls_hidden_) {
      h = unit(h, training);
      if (training && config_.cls_dropout > 0.0) {
        if (!options.dropout_rng) throw Error("training forward needs a dropout random stream");
        h = nn::dropout(h, config_.cls_dropout, *options.dropout_rng, true);
      }
    }
    out.cls_logits = cls_out_(h, training);
  }
  if (config_.has_seg_head()) {
    if (plan.up.size() != fp_.size()) throw Error("geometry plan has no decoder levels");
    Tensor<T> d = enc.features.back();
    for (std::size_t t = fp_.size(); t-- > 0;) d = fp_[t](d, enc.features[t], plan.up[t], training);
    out.seg_logits = seg_out_(seg_hidden_(d, training), training);
  }
  return out;
}

template <class T>
Tensor<T> PointNeXt<T>::classification_forward(const Batch& batch, const ForwardOptions& options) {
  if (!config_.has_cls_head()) throw Error("model has no classification head");
  return forward(batch, options).cls_logits;
}

template <class T>
Tensor<T> PointNeXt<T>::segmentation_forward(const Batch& batch, const ForwardOptions& options) {
  if (!config_.has_seg_head()) throw Error("model has no segmentation head");
  return forward(batch, options).seg_logits;
}

template <class T>
std::uint64_t save_model(const PointNeXt<T>& model, const std::filesystem::path& path) {
  const auto tensors = nn::to_checkpoint(model.params().state());
  return nn::save_checkpoint(path, tensors);
}

template <class T>
nn::LoadReport load_checkpoint(PointNeXt<T>& model, const std::filesystem::path& path, bool strict) {
  return nn::load_state(model.params().state(), nn::load_checkpoint_file(path), strict);
}

template <class T>
std::uint64_t parameter_checksum(const nn::ParameterSet<T>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : params.state()) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.data().data(), t.size() * sizeof(T), h);
  }
  return h;
}

#define PF_INSTANTIATE_MODEL(T)                                                                           \
  template Tensor<T> init_uniform<T>(const std::string&, nn::Shape, std::size_t, std::uint64_t);          \
  template struct MlpUnit<T>;                                                                           \
  template Tensor<T> group_features(const Tensor<T>&, const GroupPlan&);                                \
  template struct SetAbstraction<T>;                                                                    \
  template struct InvResBlock<T>;                                                                       \
  template struct FeaturePropagation<T>;                                                                \
  template class PointNeXt<T>;                                                                          \
  template std::uint64_t save_model(const PointNeXt<T>&, const std::filesystem::path&);                 \
  template nn::LoadReport load_checkpoint(PointNeXt<T>&, const std::filesystem::path&, bool);           \
  template std::uint64_t parameter_checksum(const nn::ParameterSet<T>&);

PF_INSTANTIATE_MODEL(float)
PF_INSTANTIATE_MODEL(double)

#undef PF_INSTANTIATE_MODEL

}  // namespace pf
