// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pf::nn {

namespace {

double eval_scalar(const std::function<Tensor<double>()>& f) {
  NoGradGuard guard;
  const Tensor<double> y = f();
  if (y.size() != 1) throw Error("gradient_check: closure must return a scalar");
  const double v = y.item();
  if (!std::isfinite(v)) throw Error("gradient_check: non-finite output");
  return v;
}

}  // namespace

GradCheckResult gradient_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw Error("gradient_check: step must be positive");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    Tensor<double> y = f();
    if (y.size() != 1) throw Error("gradient_check: closure must return a scalar");
    if (!std::isfinite(y.item())) throw Error("gradient_check: non-finite output");
    y.backward();
  }
  std::vector<std::vector<double>> analytic(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].has_grad()) {
      analytic[i].assign(inputs[i].grad().begin(), inputs[i].grad().end());
    } else {
      analytic[i].assign(inputs[i].size(), 0.0);
    }
  }

  GradCheckResult result;
  Rng rng(options.seed);
  const double h = options.step;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto values = inputs[i].data();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input != 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + h;
      const double fp = eval_scalar(f);
      values[c] = saved - h;
      const double fm = eval_scalar(f);
      values[c] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i][c];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.min_scale});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = rel;
        result.worst_input = i;
        result.worst_coord = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

}  // namespace pf::nn
