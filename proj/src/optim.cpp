// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/optim.hpp"

#include <cmath>
#include <numbers>

namespace pf::nn {

template <class T>
void ParameterSet<T>::claim(const std::string& name) {
  if (name.empty()) throw Error("parameter name must not be empty");
  if (!names_.emplace(name, 0).second) throw Error("duplicate parameter name '" + name + "'");
}

template <class T>
Tensor<T> ParameterSet<T>::add_parameter(const std::string& name, Tensor<T> tensor, bool weight_decay_exempt) {
  claim(name);
  tensor.set_requires_grad(true);
  params_.push_back({name, tensor, weight_decay_exempt});
  return tensor;
}

template <class T>
void ParameterSet<T>::add_buffer(const std::string& name, Tensor<T> tensor) {
  claim(name);
  buffers_.emplace_back(name, std::move(tensor));
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> ParameterSet<T>::state() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(params_.size() + buffers_.size());
  for (const auto& p : params_) out.emplace_back(p.name, p.tensor);
  for (const auto& b : buffers_) out.push_back(b);
  return out;
}

template <class T>
std::size_t ParameterSet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <class T>
Sgd<T>::Sgd(std::vector<Parameter<T>> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr >= 0.0)) throw Error("sgd: learning rate must be >= 0");
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].tensor.size(), T(0));
}

template <class T>
void Sgd<T>::step() {
  const T lr = static_cast<T>(options_.lr);
  const T mu = static_cast<T>(options_.momentum);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.tensor.has_grad()) continue;
    const T wd = p.weight_decay_exempt ? T(0) : static_cast<T>(options_.weight_decay);
    auto theta = p.tensor.data();
    auto g = p.tensor.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      v[j] = mu * v[j] + g[j] + wd * theta[j];
      theta[j] -= lr * v[j];
    }
  }
}

template <class T>
Adam<T>::Adam(std::vector<Parameter<T>> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr >= 0.0)) throw Error("adam: learning rate must be >= 0");
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].tensor.size(), T(0));
    v_[i].assign(params_[i].tensor.size(), T(0));
  }
}

template <class T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(options_.beta1);
  const T b2 = static_cast<T>(options_.beta2);
  const T step_size = static_cast<T>(options_.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(options_.eps);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.tensor.has_grad()) continue;
    const T decay = p.weight_decay_exempt ? T(1) : static_cast<T>(1.0 - options_.lr * options_.weight_decay);
    auto theta = p.tensor.data();
    auto g = p.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] *= decay;
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      theta[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

double cosine_lr(const LrSchedule& schedule, double epoch) {
  if (!(schedule.base_lr > 0.0) || schedule.total_epochs < 1 || schedule.min_lr < 0.0 ||
      schedule.min_lr > schedule.base_lr) {
    throw Error("cosine_lr: invalid schedule");
  }
  if (epoch < 0.0 || epoch > schedule.total_epochs) throw Error("cosine_lr: epoch outside [0, total]");
  if (schedule.kind == ScheduleKind::Constant) return schedule.base_lr;
  const double progress = epoch / static_cast<double>(schedule.total_epochs);
  return schedule.min_lr +
         0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace pf::nn
