// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-plane / per-row kernel bodies shared by the serial and OpenMP drivers.
// Keeping a single body is what makes the two backends bit-identical.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "freqvfx/error.hpp"
#include "freqvfx/kernels.hpp"

namespace freqvfx::kernels::detail {

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

template <typename T>
std::vector<T> cast_weights(std::span<const double> weights) {
  if (weights.empty() || weights.size() % 2 == 0) {
    throw ParameterError("blur weights must have odd, nonzero length");
  }
  return std::vector<T>(weights.begin(), weights.end());
}

inline void check_plane_dims(PlaneDims dims) {
  if (dims.planes == 0 || dims.height == 0 || dims.width == 0) {
    throw ShapeError("blur of an empty tensor");
  }
}

template <typename T>
void blur_plane(const T* in, T* out, T* tmp, std::size_t h, std::size_t w, const T* g,
                std::size_t radius) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      T acc = 0;
      for (std::ptrdiff_t b = -r; b <= r; ++b) {
        acc += g[b + r] * in[i * w + clamp_index(static_cast<std::ptrdiff_t>(j) + b, w)];
      }
      tmp[i * w + j] = acc;
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      T acc = 0;
      for (std::ptrdiff_t a = -r; a <= r; ++a) {
        acc += g[a + r] * tmp[clamp_index(static_cast<std::ptrdiff_t>(i) + a, h) * w + j];
      }
      out[i * w + j] = acc;
    }
  }
}

template <typename T>
void blur_plane_adjoint(const T* grad_out, T* grad_in, T* tmp, std::size_t h, std::size_t w,
                        const T* g, std::size_t radius) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::fill(tmp, tmp + h * w, T(0));
  std::fill(grad_in, grad_in + h * w, T(0));
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const T go = grad_out[i * w + j];
      for (std::ptrdiff_t a = -r; a <= r; ++a) {
        tmp[clamp_index(static_cast<std::ptrdiff_t>(i) + a, h) * w + j] += g[a + r] * go;
      }
    }
  }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const T gt = tmp[i * w + j];
      for (std::ptrdiff_t b = -r; b <= r; ++b) {
        grad_in[i * w + clamp_index(static_cast<std::ptrdiff_t>(j) + b, w)] += g[b + r] * gt;
      }
    }
  }
}

/// Materializes op(B) as a [k, n] row-major block so every row update runs the
/// same vectorizable i-p-j loop.
template <typename T>
const T* gemm_rhs(const T* b, GemmDims dims, std::vector<T>& scratch) {
  if (!dims.trans_b) return b;
  scratch.resize(dims.k * dims.n);
  for (std::size_t p = 0; p < dims.k; ++p) {
    for (std::size_t j = 0; j < dims.n; ++j) scratch[p * dims.n + j] = b[j * dims.k + p];
  }
  return scratch.data();
}

/// One output row: c_row[j] = c_row[j] (or 0) + sum_p op(A)[i, p] * rhs[p, j],
/// accumulated in increasing p.
template <typename T>
void gemm_row(const T* a, const T* rhs, T* c_row, std::size_t i, GemmDims dims) {
  if (!dims.accumulate) std::fill(c_row, c_row + dims.n, T(0));
  for (std::size_t p = 0; p < dims.k; ++p) {
    const T aip = dims.trans_a ? a[p * dims.m + i] : a[i * dims.k + p];
    const T* brow = rhs + p * dims.n;
    for (std::size_t j = 0; j < dims.n; ++j) c_row[j] += aip * brow[j];
  }
}

struct ReductionPlan {
  std::vector<std::size_t> kept_dims;
  std::vector<std::size_t> kept_strides;
  std::vector<std::size_t> reduced_dims;
  std::vector<std::size_t> reduced_strides;
  std::size_t out_size = 1;
  std::size_t reduced_size = 1;
};

inline ReductionPlan plan_reduction(const Shape& shape, const std::vector<bool>& reduce) {
  if (reduce.size() != shape.size()) throw ShapeError("reduction mask rank mismatch");
  ReductionPlan plan;
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t ax = shape.size(); ax-- > 1;) strides[ax - 1] = strides[ax] * shape[ax];
  for (std::size_t ax = 0; ax < shape.size(); ++ax) {
    if (reduce[ax]) {
      plan.reduced_dims.push_back(shape[ax]);
      plan.reduced_strides.push_back(strides[ax]);
      plan.reduced_size *= shape[ax];
    } else {
      plan.kept_dims.push_back(shape[ax]);
      plan.kept_strides.push_back(strides[ax]);
      plan.out_size *= shape[ax];
    }
  }
  return plan;
}

/// Accumulates one output of sum_sq_axes by walking its reduced coordinates in
/// lexicographic (= increasing flat index) order.
template <typename T>
T sum_sq_one(const T* x, const ReductionPlan& plan, std::size_t out_index,
             std::vector<std::size_t>& counter) {
  std::size_t base = 0;
  std::size_t rem = out_index;
  for (std::size_t ax = plan.kept_dims.size(); ax-- > 0;) {
    base += (rem % plan.kept_dims[ax]) * plan.kept_strides[ax];
    rem /= plan.kept_dims[ax];
  }
  counter.assign(plan.reduced_dims.size(), 0);
  T acc = 0;
  for (std::size_t it = 0; it < plan.reduced_size; ++it) {
    std::size_t off = base;
    for (std::size_t ax = 0; ax < counter.size(); ++ax) off += counter[ax] * plan.reduced_strides[ax];
    acc += x[off] * x[off];
    for (std::size_t ax = counter.size(); ax-- > 0;) {
      if (++counter[ax] < plan.reduced_dims[ax]) break;
      counter[ax] = 0;
    }
  }
  return acc;
}

}  // namespace freqvfx::kernels::detail
