// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pointforge/tensor.hpp"

namespace pf::nn {

// Differentiable operations. Unless stated otherwise, the last extent is the
// channel axis and all leading extents are flattened into rows.

/// y = x W + b along the channel axis. W is [Cin, Cout]; b may be undefined.
template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});

template <class T>
Tensor<T> relu(const Tensor<T>& x);

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Per-channel normalization over all rows. Training mode uses batch
/// statistics (needs at least 2 rows) and updates the running estimates;
/// eval mode applies the running estimates.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     bool training);

template <class T>
struct MaxReduceResult {
  Tensor<T> values;                 // [m, C]
  std::vector<std::uint32_t> argmax;  // m * C, position along K
};

/// Max over the middle axis of [m, K, C]; gradient flows to the first
/// maximal position.
template <class T>
MaxReduceResult<T> max_reduce_neighbors(const Tensor<T>& x);

/// Per-segment channel max of x [R, C]; segment s spans rows
/// [offsets[s], offsets[s+1]). Result is [segments, C].
template <class T>
Tensor<T> segment_max(const Tensor<T>& x, std::span<const std::size_t> offsets);

/// Rows of x [R, C] picked by `indices`; result shape is lead_shape + [C].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices, Shape lead_shape);

/// out[t] = sum_j weights[t*k+j] * x[indices[t*k+j]]; weights are constants.
template <class T>
Tensor<T> weighted_gather(const Tensor<T>& x, std::span<const std::size_t> indices, std::span<const double> weights,
                          std::size_t k);

template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, double s);

/// x times a one-element tensor s.
template <class T>
Tensor<T> mul_by(const Tensor<T>& x, const Tensor<T>& s);

template <class T>
Tensor<T> exp(const Tensor<T>& x);

template <class T>
Tensor<T> sum(const Tensor<T>& x);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <class T>
Tensor<T> transpose(const Tensor<T>& x);

/// a [n, D] times b [m, D] transposed -> [n, m].
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps = 1e-12);

/// Inverted dropout; identity when not training or p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training);

/// Weighted mean of -log softmax(logits)[target] over rows whose target is
/// not `ignore_index`, normalized by the sum of the used weights.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                                std::span<const double> class_weights = {},
                                std::optional<int> ignore_index = std::nullopt);

}  // namespace pf::nn
