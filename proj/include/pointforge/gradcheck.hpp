// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pointforge/tensor.hpp"

namespace pf::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  /// When nonzero, at most this many coordinates per input are probed
  /// (chosen uniformly with `seed`); otherwise every coordinate is.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  /// Errors are relative to max(|analytic|, |numeric|, min_scale), so
  /// vanishing gradients are judged on finite-difference roundoff scale.
  double min_scale = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of a scalar-valued closure against
/// central differences (f(x+h) - f(x-h)) / 2h. Relative error per
/// coordinate is |a - n| / max(|a|, |n|, 1e-12). Throws on non-finite output.
GradCheckResult gradient_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                               const GradCheckOptions& options = {});

}  // namespace pf::nn
