// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/ulip.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"

namespace pf {

using nn::Tensor;

namespace {

constexpr std::string_view kEmbMagic = "PFEMB v1\n";
constexpr std::string_view kClsMagic = "PFCLS v1\n";

void check_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw FormatError(what + ": non-finite value");
  }
}

}  // namespace

void EmbeddingTriplet::validate() const {
  if (dim == 0) throw FormatError("embedding '" + name + "': zero width");
  if (text.empty() || text.size() % dim != 0) throw FormatError("embedding '" + name + "': bad text block");
  if (image.size() % dim != 0) throw FormatError("embedding '" + name + "': bad image block");
  check_finite(text, "embedding '" + name + "'");
  check_finite(image, "embedding '" + name + "'");
}

void save_embedding(const std::filesystem::path& path, const EmbeddingTriplet& triplet) {
  triplet.validate();
  std::string out(kEmbMagic);
  io::put_u(out, triplet.name.size(), 4);
  out += triplet.name;
  io::put_u(out, triplet.dim, 4);
  io::put_u(out, triplet.text_rows(), 4);
  io::put_u(out, triplet.image_rows(), 4);
  for (float v : triplet.text) io::put_f32(out, v);
  for (float v : triplet.image) io::put_f32(out, v);
  io::write_file(path, out);
}

EmbeddingTriplet load_embedding(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::Reader r(data, path.string());
  if (r.bytes(kEmbMagic.size()) != kEmbMagic) throw FormatError(path.string() + ": not a PFEMB v1 file");
  EmbeddingTriplet t;
  t.name = r.bytes(r.u(4));
  t.dim = r.u(4);
  const std::size_t text_rows = r.u(4);
  const std::size_t image_rows = r.u(4);
  r.need((text_rows + image_rows) * t.dim * 4);
  t.text.resize(text_rows * t.dim);
  t.image.resize(image_rows * t.dim);
  for (auto& v : t.text) v = r.f32();
  for (auto& v : t.image) v = r.f32();
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  t.validate();
  return t;
}

void save_class_prompts(const std::filesystem::path& path, const ClassPrompts& prompts) {
  if (prompts.dim == 0 || prompts.vectors.size() != prompts.names.size() * prompts.dim) {
    throw Error("class prompts: inconsistent sizes");
  }
  std::string out(kClsMagic);
  io::put_u(out, prompts.names.size(), 4);
  io::put_u(out, prompts.dim, 4);
  for (const auto& n : prompts.names) {
    io::put_u(out, n.size(), 4);
    out += n;
  }
  for (float v : prompts.vectors) io::put_f32(out, v);
  io::write_file(path, out);
}

ClassPrompts load_class_prompts(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::Reader r(data, path.string());
  if (r.bytes(kClsMagic.size()) != kClsMagic) throw FormatError(path.string() + ": not a PFCLS v1 file");
  ClassPrompts p;
  const std::size_t count = r.u(4);
  p.dim = r.u(4);
  if (p.dim == 0) throw FormatError(path.string() + ": zero width");
  for (std::size_t i = 0; i < count; ++i) p.names.push_back(r.bytes(r.u(4)));
  r.need(count * p.dim * 4);
  p.vectors.resize(count * p.dim);
  for (auto& v : p.vectors) v = r.f32();
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes");
  check_finite(p.vectors, path.string());
  return p;
}

std::vector<double> average_text_embedding(const EmbeddingTriplet& triplet) {
  if (triplet.dim == 0 || triplet.text_rows() == 0) throw Error("average_text_embedding: no prompt rows");
  std::vector<double> mean(triplet.dim, 0.0);
  for (std::size_t r = 0; r < triplet.text_rows(); ++r) {
    for (std::size_t j = 0; j < triplet.dim; ++j) mean[j] += triplet.text[r * triplet.dim + j];
  }
  double norm = 0.0;
  for (double& v : mean) {
    v /= static_cast<double>(triplet.text_rows());
    norm += v * v;
  }
  norm = std::sqrt(norm);
  if (!(norm > 1e-12)) throw Error("average_text_embedding: mean of '" + triplet.name + "' is zero");
  for (double& v : mean) v /= norm;
  return mean;
}

template <class T>
Tensor<T> contrastive_alignment_loss(const Tensor<T>& points, const Tensor<T>& targets, const Tensor<T>& log_tau) {
  if (points.rank() != 2 || points.shape() != targets.shape()) {
    throw Error("contrastive loss: expected matching [B, D] inputs, got " + nn::shape_str(points.shape()) + " and " +
                nn::shape_str(targets.shape()));
  }
  if (log_tau.size() != 1) throw Error("contrastive loss: temperature must be a single value");
  for (const auto* t : {&points, &targets}) {
    for (T v : t->data()) {
      if (!std::isfinite(static_cast<double>(v))) throw Error("contrastive loss: non-finite features");
    }
  }
  const std::size_t b = points.dim(0);
  const Tensor<T> inv_tau = nn::exp(nn::mul_scalar(log_tau, -1.0));
  const Tensor<T> logits = nn::mul_by(nn::matmul_nt(nn::l2_normalize_rows(points), nn::l2_normalize_rows(targets)), inv_tau);
  std::vector<int> diag(b);
  std::iota(diag.begin(), diag.end(), 0);
  const Tensor<T> forward = nn::softmax_cross_entropy(logits, diag);
  const Tensor<T> backward = nn::softmax_cross_entropy(nn::transpose(logits), diag);
  return nn::mul_scalar(nn::add(forward, backward), 0.5);
}

template Tensor<float> contrastive_alignment_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> contrastive_alignment_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

ZeroShotResult zero_shot_classify(std::span<const double> feature, const ClassPrompts& prompts,
                                  std::span<const int> candidates) {
  if (feature.size() != prompts.dim) throw Error("zero_shot_classify: feature width does not match prompts");
  std::vector<int> cands(candidates.begin(), candidates.end());
  if (cands.empty()) {
    cands.resize(prompts.names.size());
    std::iota(cands.begin(), cands.end(), 0);
  }
  double fnorm = 0.0;
  for (double v : feature) fnorm += v * v;
  fnorm = std::sqrt(fnorm);
  if (!(fnorm > 0.0)) throw Error("zero_shot_classify: zero feature");

  ZeroShotResult r;
  for (int c : cands) {
    if (c < 0 || static_cast<std::size_t>(c) >= prompts.names.size()) throw Error("zero_shot_classify: bad class");
    const auto row = prompts.row(static_cast<std::size_t>(c));
    double dot = 0.0, rnorm = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      dot += feature[j] * row[j];
      rnorm += static_cast<double>(row[j]) * row[j];
    }
    r.similarity.push_back(rnorm > 0.0 ? dot / (fnorm * std::sqrt(rnorm)) : 0.0);
  }
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (r.similarity[a] != r.similarity[b]) return r.similarity[a] > r.similarity[b];
    return cands[a] < cands[b];
  });
  for (std::size_t i = 0; i < std::min<std::size_t>(5, order.size()); ++i) r.top5.push_back(cands[order[i]]);
  r.top1 = r.top5.front();
  return r;
}

template <class T>
ProjectionHead<T>::ProjectionHead(nn::ParameterSet<T>& params, std::size_t width, std::size_t dim, std::uint64_t seed) {
  weight = params.add_parameter("ulip.proj.weight", init_uniform<T>("ulip.proj.weight", {width, dim}, width, seed),
                                false);
  const T init = static_cast<T>(std::log(kInitialTemperature));
  log_tau_text = params.add_parameter("ulip.log_tau_text", Tensor<T>(nn::Shape{1}, init), true);
  log_tau_image = params.add_parameter("ulip.log_tau_image", Tensor<T>(nn::Shape{1}, init), true);
}

template <class T>
void ProjectionHead<T>::clamp_temperature() {
  const T lo = static_cast<T>(std::log(0.01));
  for (auto* t : {&log_tau_text, &log_tau_image}) {
    T& v = t->data()[0];
    v = std::clamp(v, lo, T(0));
  }
}

template struct ProjectionHead<float>;
template struct ProjectionHead<double>;

template <class Optimizer>
PretrainStepResult pretrain_step(PointNeXt<float>& model, ProjectionHead<float>& head, Optimizer& optimizer,
                                 std::span<const PretrainSample> batch, const ForwardOptions& options, Rng& rng,
                                 Axis up_axis) {
  if (batch.empty()) throw Error("pretrain_step: empty batch");
  const std::size_t dim = head.weight.dim(1);
  Batch input;
  std::vector<float> text, image;
  for (const auto& s : batch) {
    if (!s.triplet) throw Error("pretrain_step: missing embeddings for '" + s.cloud.name + "'");
    if (s.triplet->dim != dim) throw Error("pretrain_step: embedding width mismatch for '" + s.cloud.name + "'");
    if (s.triplet->image_rows() == 0) throw Error("pretrain_step: no image rows for '" + s.cloud.name + "'");
    append_cloud(input, s.cloud, up_axis);
    const auto avg = average_text_embedding(*s.triplet);
    text.insert(text.end(), avg.begin(), avg.end());
    std::uniform_int_distribution<std::size_t> pick(0, s.triplet->image_rows() - 1);
    const std::size_t row = pick(rng);
    image.insert(image.end(), s.triplet->image.begin() + static_cast<std::ptrdiff_t>(row * dim),
                 s.triplet->image.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim));
  }
  const ModelOutput<float> out = model.forward(input, options);
  if (!out.global.defined()) throw Error("pretrain_step: model does not expose a global feature");
  const Tensor<float> proj = head(out.global);
  const nn::Shape shape{batch.size(), dim};
  const Tensor<float> lt = contrastive_alignment_loss(proj, Tensor<float>(shape, std::move(text)), head.log_tau_text);
  const Tensor<float> li = contrastive_alignment_loss(proj, Tensor<float>(shape, std::move(image)), head.log_tau_image);
  Tensor<float> loss = nn::add(lt, li);
  PretrainStepResult result{loss.item(), lt.item(), li.item()};
  if (!std::isfinite(result.loss)) throw Error("pretrain_step: loss is not finite");
  model.params().zero_grad();
  loss.backward();
  optimizer.step();
  head.clamp_temperature();
  return result;
}

template PretrainStepResult pretrain_step(PointNeXt<float>&, ProjectionHead<float>&, nn::Sgd<float>&,
                                          std::span<const PretrainSample>, const ForwardOptions&, Rng&, Axis);
template PretrainStepResult pretrain_step(PointNeXt<float>&, ProjectionHead<float>&, nn::Adam<float>&,
                                          std::span<const PretrainSample>, const ForwardOptions&, Rng&, Axis);

std::vector<std::vector<double>> embed_clouds(PointNeXt<float>& model, const ProjectionHead<float>& head,
                                              std::span<const PointCloud> clouds, Axis up_axis) {
  nn::NoGradGuard guard;
  std::vector<std::vector<double>> rows;
  for (const auto& cloud : clouds) {
    const Batch b = make_batch(std::span<const PointCloud>(&cloud, 1), up_axis);
    const ModelOutput<float> out = model.forward(b, ForwardOptions{});
    const Tensor<float> p = head(out.global);
    std::vector<double> v(p.data().begin(), p.data().end());
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    rows.push_back(std::move(v));
  }
  return rows;
}

}  // namespace pf
