// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace pf::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

struct RowsCols {
  std::size_t rows;
  std::size_t cols;
};

template <class T>
RowsCols rows_cols(const Tensor<T>& x) {
  if (x.rank() == 0) return {1, 1};
  const std::size_t c = x.shape().back();
  return {x.size() / c, c};
}

template <class T>
bool wants_grad(const detail::Node<T>& n, std::size_t i) {
  return i < n.inputs.size() && n.inputs[i]->requires_grad;
}

}  // namespace

template <class T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) throw Error("dense: weight must be [Cin, Cout]");
  const auto [rows, cin] = rows_cols(x);
  if (x.rank() == 0 || cin != weight.dim(0)) {
    throw Error("dense: input " + shape_str(x.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  const std::size_t cout = weight.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) throw Error("dense: bias must be [Cout]");

  std::vector<T> out(rows * cout);
  MapMat<T> y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cout));
  MapConstMat<T> xm(x.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cin));
  MapConstMat<T> wm(weight.data().data(), static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(cout));
  y.noalias() = xm * wm;
  if (has_bias) {
    const T* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* yr = out.data() + r * cout;
      for (std::size_t c = 0; c < cout; ++c) yr[c] += b[c];
    }
  }

  Shape shape = x.shape();
  shape.back() = cout;
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return Tensor<T>::from_op(std::move(shape), std::move(out), std::move(inputs),
                            [rows, cin, cout, has_bias](detail::Node<T>& self) {
    const auto R = static_cast<Eigen::Index>(rows);
    const auto I = static_cast<Eigen::Index>(cin);
    const auto O = static_cast<Eigen::Index>(cout);
    MapConstMat<T> dy(self.grad.data(), R, O);
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    if (xn.requires_grad) {
      MapMat<T> dx(xn.grad.data(), R, I);
      dx.noalias() += dy * MapConstMat<T>(wn.value.data(), I, O).transpose();
    }
    if (wn.requires_grad) {
      MapMat<T> dw(wn.grad.data(), I, O);
      dw.noalias() += MapConstMat<T>(xn.value.data(), R, I).transpose() * dy;
    }
    if (has_bias && wants_grad(self, 2)) {
      T* db = self.inputs[2]->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* g = self.grad.data() + r * cout;
        for (std::size_t c = 0; c < cout; ++c) db[c] += g[c];
      }
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const T* xv = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.value[i] > T(0)) in.grad[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormState<T>& state,
                     bool training) {
  const auto [rows, ch] = rows_cols(x);
  if (x.rank() == 0 || gamma.size() != ch || beta.size() != ch || state.running_mean.size() != ch ||
      state.running_var.size() != ch) {
    throw Error("batch_norm: channel mismatch for input " + shape_str(x.shape()));
  }
  if (training && rows < 2) throw Error("batch_norm: training mode needs at least 2 rows");

  const T* xv = x.data().data();
  std::vector<T> mean(ch), invstd(ch);
  if (training) {
    std::vector<double> s(ch, 0.0), s2(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = xv + r * ch;
      for (std::size_t c = 0; c < ch; ++c) s[c] += xr[c];
    }
    for (std::size_t c = 0; c < ch; ++c) s[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = xv + r * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = xr[c] - s[c];
        s2[c] += d * d;
      }
    }
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    const double m = state.momentum;
    for (std::size_t c = 0; c < ch; ++c) {
      const double var = s2[c] / static_cast<double>(rows);
      mean[c] = static_cast<T>(s[c]);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = s2[c] / static_cast<double>(rows - 1);
      rm[c] = static_cast<T>((1.0 - m) * rm[c] + m * s[c]);
      rv[c] = static_cast<T>((1.0 - m) * rv[c] + m * unbiased);
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = rm[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + state.eps));
    }
  }

  const T* g = gamma.data().data();
  const T* b = beta.data().data();
  std::vector<T> xhat(x.size()), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * ch;
    T* hr = xhat.data() + r * ch;
    T* yr = out.data() + r * ch;
    for (std::size_t c = 0; c < ch; ++c) {
      hr[c] = (xr[c] - mean[c]) * invstd[c];
      yr[c] = g[c] * hr[c] + b[c];
    }
  }

  return Tensor<T>::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, ch, training, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        std::vector<T> sum_dy(ch, T(0)), sum_dy_xhat(ch, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = dy + r * ch;
          const T* hr = xhat.data() + r * ch;
          for (std::size_t c = 0; c < ch; ++c) {
            sum_dy[c] += gr[c];
            sum_dy_xhat[c] += gr[c] * hr[c];
          }
        }
        if (wants_grad(self, 1)) {
          T* dg = self.inputs[1]->grad.data();
          for (std::size_t c = 0; c < ch; ++c) dg[c] += sum_dy_xhat[c];
        }
        if (wants_grad(self, 2)) {
          T* db = self.inputs[2]->grad.data();
          for (std::size_t c = 0; c < ch; ++c) db[c] += sum_dy[c];
        }
        if (!wants_grad(self, 0)) return;
        const T* gm = self.inputs[1]->value.data();
        T* dx = self.inputs[0]->grad.data();
        if (training) {
          const T inv_n = T(1) / static_cast<T>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = dy + r * ch;
            const T* hr = xhat.data() + r * ch;
            T* dr = dx + r * ch;
            for (std::size_t c = 0; c < ch; ++c) {
              dr[c] += gm[c] * invstd[c] * inv_n *
                       (static_cast<T>(rows) * gr[c] - sum_dy[c] - hr[c] * sum_dy_xhat[c]);
            }
          }
        } else {
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = dy + r * ch;
            T* dr = dx + r * ch;
            for (std::size_t c = 0; c < ch; ++c) dr[c] += gr[c] * gm[c] * invstd[c];
          }
        }
      });
}

template <class T>
MaxReduceResult<T> max_reduce_neighbors(const Tensor<T>& x) {
  if (x.rank() != 3) throw Error("max_reduce_neighbors: expected [m, K, C], got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), k = x.dim(1), ch = x.dim(2);
  std::vector<T> out(m * ch);
  std::vector<std::uint32_t> arg(m * ch, 0);
  const T* xv = x.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* base = xv + i * k * ch;
    T* o = out.data() + i * ch;
    std::uint32_t* a = arg.data() + i * ch;
    std::copy(base, base + ch, o);
    for (std::size_t j = 1; j < k; ++j) {
      const T* row = base + j * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        if (row[c] > o[c]) {
          o[c] = row[c];
          a[c] = static_cast<std::uint32_t>(j);
        }
      }
    }
  }
  MaxReduceResult<T> result;
  result.values = Tensor<T>::from_op(Shape{m, ch}, std::move(out), {x}, [m, k, ch, arg](detail::Node<T>& self) {
    T* dx = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < ch; ++c) {
        dx[(i * k + arg[i * ch + c]) * ch + c] += self.grad[i * ch + c];
      }
    }
  });
  result.argmax = std::move(arg);
  return result;
}

template <class T>
Tensor<T> segment_max(const Tensor<T>& x, std::span<const std::size_t> offsets) {
  const auto [rows, ch] = rows_cols(x);
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw Error("segment_max: offsets must run from 0 to the row count");
  }
  const std::size_t segs = offsets.size() - 1;
  std::vector<T> out(segs * ch);
  std::vector<std::size_t> arg(segs * ch);
  const T* xv = x.data().data();
  for (std::size_t s = 0; s < segs; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw Error("segment_max: empty segment");
    T* o = out.data() + s * ch;
    std::size_t* a = arg.data() + s * ch;
    std::copy(xv + offsets[s] * ch, xv + (offsets[s] + 1) * ch, o);
    std::fill(a, a + ch, offsets[s]);
    for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
      const T* row = xv + r * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        if (row[c] > o[c]) {
          o[c] = row[c];
          a[c] = r;
        }
      }
    }
  }
  return Tensor<T>::from_op(Shape{segs, ch}, std::move(out), {x}, [segs, ch, arg](detail::Node<T>& self) {
    T* dx = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < segs * ch; ++i) dx[arg[i] * ch + i % ch] += self.grad[i];
  });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices, Shape lead_shape) {
  const auto [rows, ch] = rows_cols(x);
  if (numel(lead_shape) != indices.size()) throw Error("gather_rows: lead shape does not match index count");
  std::vector<T> out(indices.size() * ch);
  const T* xv = x.data().data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw Error("gather_rows: index out of range");
    std::copy(xv + indices[i] * ch, xv + (indices[i] + 1) * ch, out.data() + i * ch);
  }
  lead_shape.push_back(ch);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor<T>::from_op(std::move(lead_shape), std::move(out), {x},
                            [ch, idx = std::move(idx)](detail::Node<T>& self) {
    T* dx = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const T* g = self.grad.data() + i * ch;
      T* d = dx + idx[i] * ch;
      for (std::size_t c = 0; c < ch; ++c) d[c] += g[c];
    }
  });
}

template <class T>
Tensor<T> weighted_gather(const Tensor<T>& x, std::span<const std::size_t> indices, std::span<const double> weights,
                          std::size_t k) {
  const auto [rows, ch] = rows_cols(x);
  if (k == 0 || indices.size() % k != 0 || weights.size() != indices.size()) {
    throw Error("weighted_gather: indices/weights do not form rows of k");
  }
  const std::size_t targets = indices.size() / k;
  std::vector<T> out(targets * ch, T(0));
  const T* xv = x.data().data();
  std::vector<T> w(weights.begin(), weights.end());
  for (std::size_t t = 0; t < targets; ++t) {
    T* o = out.data() + t * ch;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = indices[t * k + j];
      if (src >= rows) throw Error("weighted_gather: index out of range");
      const T wj = w[t * k + j];
      const T* xr = xv + src * ch;
      for (std::size_t c = 0; c < ch; ++c) o[c] += wj * xr[c];
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor<T>::from_op(Shape{targets, ch}, std::move(out), {x},
                            [targets, ch, k, idx = std::move(idx), w = std::move(w)](detail::Node<T>& self) {
    T* dx = self.inputs[0]->grad.data();
    for (std::size_t t = 0; t < targets; ++t) {
      const T* g = self.grad.data() + t * ch;
      for (std::size_t j = 0; j < k; ++j) {
        T* d = dx + idx[t * k + j] * ch;
        const T wj = w[t * k + j];
        for (std::size_t c = 0; c < ch; ++c) d[c] += wj * g[c];
      }
    }
  });
}

template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  const auto [ra, ca] = rows_cols(a);
  const auto [rb, cb] = rows_cols(b);
  if (ra != rb || a.rank() != b.rank()) {
    throw Error("concat_last: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t c = ca + cb;
  std::vector<T> out(ra * c);
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for (std::size_t r = 0; r < ra; ++r) {
    std::copy(av + r * ca, av + (r + 1) * ca, out.data() + r * c);
    std::copy(bv + r * cb, bv + (r + 1) * cb, out.data() + r * c + ca);
  }
  Shape shape = a.shape();
  shape.back() = c;
  const std::size_t rows = ra;
  return Tensor<T>::from_op(std::move(shape), std::move(out), {a, b}, [rows, ca, cb](detail::Node<T>& self) {
    const std::size_t c = ca + cb;
    if (wants_grad(self, 0)) {
      T* d = self.inputs[0]->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* g = self.grad.data() + r * c;
        for (std::size_t j = 0; j < ca; ++j) d[r * ca + j] += g[j];
      }
    }
    if (wants_grad(self, 1)) {
      T* d = self.inputs[1]->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* g = self.grad.data() + r * c + ca;
        for (std::size_t j = 0; j < cb; ++j) d[r * cb + j] += g[j];
      }
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw Error("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      T* d = self.inputs[k]->grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, double s) {
  const T st = static_cast<T>(s);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * st;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [st](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * st;
  });
}

template <class T>
Tensor<T> mul_by(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1) throw Error("mul_by: scale must have exactly one element");
  const T sv = s.data()[0];
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * sv;
  return Tensor<T>::from_op(x.shape(), std::move(out), {x, s}, [](detail::Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const T sv = self.inputs[1]->value[0];
    if (wants_grad(self, 0)) {
      T* d = self.inputs[0]->grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * sv;
    }
    if (wants_grad(self, 1)) {
      T acc = T(0);
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xv[i];
      self.inputs[1]->grad[0] += acc;
    }
  });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x.data()[i]);
  return Tensor<T>::from_op(x.shape(), out, {x}, [y = out](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * y[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return Tensor<T>::from_op(Shape{}, std::vector<T>{acc}, {x}, [](detail::Node<T>& self) {
    const T g = self.grad[0];
    for (T& d : self.inputs[0]->grad) d += g;
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw Error("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return Tensor<T>::from_op(std::move(shape), x.values(), {x}, [](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() != 2) throw Error("transpose: expected a matrix");
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<T> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x.data()[i * m + j];
  }
  return Tensor<T>::from_op(Shape{m, n}, std::move(out), {x}, [n, m](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) d[i * m + j] += self.grad[j * n + i];
    }
  });
}

template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw Error("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto m = static_cast<Eigen::Index>(b.dim(0));
  const auto d = static_cast<Eigen::Index>(a.dim(1));
  std::vector<T> out(static_cast<std::size_t>(n * m));
  MapMat<T>(out.data(), n, m).noalias() =
      MapConstMat<T>(a.data().data(), n, d) * MapConstMat<T>(b.data().data(), m, d).transpose();
  return Tensor<T>::from_op(Shape{a.dim(0), b.dim(0)}, std::move(out), {a, b}, [n, m, d](detail::Node<T>& self) {
    MapConstMat<T> g(self.grad.data(), n, m);
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) MapMat<T>(an.grad.data(), n, d).noalias() += g * MapConstMat<T>(bn.value.data(), m, d);
    if (bn.requires_grad) {
      MapMat<T>(bn.grad.data(), m, d).noalias() += g.transpose() * MapConstMat<T>(an.value.data(), n, d);
    }
  });
}

template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, double eps) {
  const auto [rows, ch] = rows_cols(x);
  std::vector<T> out(x.size());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) s += static_cast<double>(x.data()[r * ch + c]) * x.data()[r * ch + c];
    const T n = static_cast<T>(std::max(std::sqrt(s), eps));
    norms[r] = n;
    for (std::size_t c = 0; c < ch; ++c) out[r * ch + c] = x.data()[r * ch + c] / n;
  }
  return Tensor<T>::from_op(x.shape(), out, {x},
                            [rows, ch, y = out, norms = std::move(norms)](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = self.grad.data() + r * ch;
      const T* yr = y.data() + r * ch;
      T dot = T(0);
      for (std::size_t c = 0; c < ch; ++c) dot += g[c] * yr[c];
      for (std::size_t c = 0; c < ch; ++c) d[r * ch + c] += (g[c] - yr[c] * dot) / norms[r];
    }
  });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? scale : T(0);
    out[i] = x.data()[i] * mask[i];
  }
  return Tensor<T>::from_op(x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node<T>& self) {
    T* d = self.inputs[0]->grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i] * mask[i];
  });
}

template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> targets,
                                std::span<const double> class_weights, std::optional<int> ignore_index) {
  const auto [rows, ch] = rows_cols(logits);
  if (logits.rank() == 0 || targets.size() != rows) {
    throw Error("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                shape_str(logits.shape()));
  }
  if (!class_weights.empty() && class_weights.size() != ch) {
    throw Error("softmax_cross_entropy: class weight count does not match classes");
  }
  const T* lv = logits.data().data();
  std::vector<double> row_scale(rows, 0.0);  // w_target / total weight; 0 when ignored
  std::vector<T> probs(logits.size());
  double total_w = 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (ignore_index && t == *ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= ch) {
      throw Error("softmax_cross_entropy: target " + std::to_string(t) + " out of range");
    }
    const T* l = lv + r * ch;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ch; ++c) mx = std::max(mx, static_cast<double>(l[c]));
    double z = 0.0;
    for (std::size_t c = 0; c < ch; ++c) z += std::exp(static_cast<double>(l[c]) - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < ch; ++c) probs[r * ch + c] = static_cast<T>(std::exp(static_cast<double>(l[c]) - log_z));
    const double w = class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(t)];
    loss += w * (log_z - static_cast<double>(l[t]));
    total_w += w;
    row_scale[r] = w;
  }
  if (total_w <= 0.0) throw Error("softmax_cross_entropy: every item is ignored");
  for (double& s : row_scale) s /= total_w;
  std::vector<int> tgt(targets.begin(), targets.end());
  return Tensor<T>::from_op(Shape{}, std::vector<T>{static_cast<T>(loss / total_w)}, {logits},
                            [rows, ch, probs = std::move(probs), row_scale = std::move(row_scale),
                             tgt = std::move(tgt)](detail::Node<T>& self) {
    const T g = self.grad[0];
    T* d = self.inputs[0]->grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      if (row_scale[r] == 0.0) continue;
      const T s = g * static_cast<T>(row_scale[r]);
      for (std::size_t c = 0; c < ch; ++c) d[r * ch + c] += s * probs[r * ch + c];
      d[r * ch + static_cast<std::size_t>(tgt[r])] -= s;
    }
  });
}

#define PF_INSTANTIATE_OPS(T)                                                                                     \
  template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                                      \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, bool);  \
  template MaxReduceResult<T> max_reduce_neighbors(const Tensor<T>&);                                             \
  template Tensor<T> segment_max(const Tensor<T>&, std::span<const std::size_t>);                                 \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>, Shape);                          \
  template Tensor<T> weighted_gather(const Tensor<T>&, std::span<const std::size_t>, std::span<const double>,     \
                                     std::size_t);                                                                \
  template Tensor<T> concat_last(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> mul_scalar(const Tensor<T>&, double);                                                        \
  template Tensor<T> mul_by(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> exp(const Tensor<T>&);                                                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                            \
  template Tensor<T> transpose(const Tensor<T>&);                                                                 \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, double);                                                 \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&, bool);                                               \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>, std::span<const double>,       \
                                           std::optional<int>);

PF_INSTANTIATE_OPS(float)
PF_INSTANTIATE_OPS(double)

#undef PF_INSTANTIATE_OPS

}  // namespace pf::nn
