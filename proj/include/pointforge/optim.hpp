// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "pointforge/tensor.hpp"

namespace pf::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool weight_decay_exempt = false;
};

/// Ordered registry of named parameters and non-trainable buffers
/// (running statistics). Names are unique across both.
template <class T>
class ParameterSet {
 public:
  Tensor<T> add_parameter(const std::string& name, Tensor<T> tensor, bool weight_decay_exempt);
  void add_buffer(const std::string& name, Tensor<T> tensor);

  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& buffers() const { return buffers_; }

  /// Parameters followed by buffers, in registration order.
  std::vector<std::pair<std::string, Tensor<T>>> state() const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void claim(const std::string& name);
  std::vector<Parameter<T>> params_;
  std::vector<std::pair<std::string, Tensor<T>>> buffers_;
  std::map<std::string, int> names_;
};

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// v <- mu v + g + wd theta; theta <- theta - lr v.
template <class T>
class Sgd {
 public:
  Sgd(std::vector<Parameter<T>> params, SgdOptions options);
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

 private:
  std::vector<Parameter<T>> params_;
  SgdOptions options_;
  std::vector<std::vector<T>> velocity_;
};

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Adam with decoupled weight decay applied before the adaptive step.
template <class T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>> params, AdamOptions options);
  void step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

 private:
  std::vector<Parameter<T>> params_;
  AdamOptions options_;
  std::vector<std::vector<T>> m_, v_;
  long long t_ = 0;
};

enum class ScheduleKind { Cosine, Constant };

struct LrSchedule {
  double base_lr = 0.01;
  int total_epochs = 100;
  ScheduleKind kind = ScheduleKind::Cosine;
  double min_lr = 0.0;
};

/// min + (base - min)(1 + cos(pi epoch / total)) / 2 for cosine decay.
double cosine_lr(const LrSchedule& schedule, double epoch);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Sgd<float>;
extern template class Sgd<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace pf::nn
