// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "freqvfx/tensor.hpp"

// Dense kernels behind the tensor operations. Every kernel exists twice: a
// serial reference in `serial::` and an OpenMP version in `parallel::`. The
// parallel versions split work over independent outputs (planes, rows, output
// elements) and run the same per-output arithmetic in the same order, so the
// two backends are bit-identical. Tests assert this.

namespace freqvfx::kernels {

enum class Backend { serial, parallel };

/// Backend used by the dispatching wrappers below. Defaults to parallel.
Backend default_backend();
void set_default_backend(Backend backend);

/// Truncated Gaussian support: ceil(3 * sigma), at least 1.
std::size_t gaussian_radius(double sigma);

/// Normalized 1-D Gaussian weights of length 2 * radius + 1. The 2-D kernel is
/// the outer product, so it sums to 1 as well.
std::vector<double> gaussian_weights(double sigma);

struct PlaneDims {
  std::size_t planes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Row-major GEMM description: C[m, n] (+)= op(A)[m, k] * op(B)[k, n], repeated
/// over `batch` independent problems laid out contiguously.
struct GemmDims {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

#define FREQVFX_KERNEL_DECLS                                                                    \
  template <typename T>                                                                         \
  void blur_planes(const T* in, T* out, PlaneDims dims, std::span<const double> weights);      \
  template <typename T>                                                                         \
  void blur_planes_adjoint(const T* grad_out, T* grad_in, PlaneDims dims,                      \
                           std::span<const double> weights);                                   \
  template <typename T>                                                                         \
  void gemm(const T* a, const T* b, T* c, GemmDims dims);                                      \
  template <typename T>                                                                         \
  void sum_sq_axes(const T* x, const Shape& shape, const std::vector<bool>& reduce, T* out);

namespace serial {
FREQVFX_KERNEL_DECLS
}  // namespace serial

namespace parallel {
FREQVFX_KERNEL_DECLS
}  // namespace parallel

#undef FREQVFX_KERNEL_DECLS

/// Depthwise separable Gaussian blur with replicate (edge-clamp) padding.
template <typename T>
void blur_planes(const T* in, T* out, PlaneDims dims, std::span<const double> weights,
                 Backend backend = default_backend()) {
  backend == Backend::serial ? serial::blur_planes(in, out, dims, weights)
                             : parallel::blur_planes(in, out, dims, weights);
}

/// Transpose of blur_planes; overwrites grad_in.
template <typename T>
void blur_planes_adjoint(const T* grad_out, T* grad_in, PlaneDims dims,
                         std::span<const double> weights, Backend backend = default_backend()) {
  backend == Backend::serial ? serial::blur_planes_adjoint(grad_out, grad_in, dims, weights)
                             : parallel::blur_planes_adjoint(grad_out, grad_in, dims, weights);
}

template <typename T>
void gemm(const T* a, const T* b, T* c, GemmDims dims, Backend backend = default_backend()) {
  backend == Backend::serial ? serial::gemm(a, b, c, dims) : parallel::gemm(a, b, c, dims);
}

/// Sum of squares over the axes flagged in `reduce`; output holds the kept axes
/// in order. Each output accumulates its inputs in increasing flat-index order.
template <typename T>
void sum_sq_axes(const T* x, const Shape& shape, const std::vector<bool>& reduce, T* out,
                 Backend backend = default_backend()) {
  backend == Backend::serial ? serial::sum_sq_axes(x, shape, reduce, out)
                             : parallel::sum_sq_axes(x, shape, reduce, out);
}

}  // namespace freqvfx::kernels
