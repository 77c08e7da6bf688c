// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>

#include "kernel_bodies.hpp"

namespace freqvfx::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend default_backend() { return g_backend.load(std::memory_order_relaxed); }

void set_default_backend(Backend backend) { g_backend.store(backend, std::memory_order_relaxed); }

std::size_t gaussian_radius(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ParameterError("gaussian sigma must be positive and finite, got " + std::to_string(sigma));
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(3.0 * sigma)));
}

std::vector<double> gaussian_weights(double sigma) {
  const std::size_t radius = gaussian_radius(sigma);
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(radius);
    w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace serial {

template <typename T>
void blur_planes(const T* in, T* out, PlaneDims dims, std::span<const double> weights) {
  detail::check_plane_dims(dims);
  const std::vector<T> g = detail::cast_weights<T>(weights);
  const std::size_t plane = dims.height * dims.width;
  std::vector<T> tmp(plane);
  for (std::size_t p = 0; p < dims.planes; ++p) {
    detail::blur_plane(in + p * plane, out + p * plane, tmp.data(), dims.height, dims.width,
                       g.data(), weights.size() / 2);
  }
}

template <typename T>
void blur_planes_adjoint(const T* grad_out, T* grad_in, PlaneDims dims,
                         std::span<const double> weights) {
  detail::check_plane_dims(dims);
  const std::vector<T> g = detail::cast_weights<T>(weights);
  const std::size_t plane = dims.height * dims.width;
  std::vector<T> tmp(plane);
  for (std::size_t p = 0; p < dims.planes; ++p) {
    detail::blur_plane_adjoint(grad_out + p * plane, grad_in + p * plane, tmp.data(), dims.height,
                               dims.width, g.data(), weights.size() / 2);
  }
}

template <typename T>
void gemm(const T* a, const T* b, T* c, GemmDims dims) {
  std::vector<T> scratch;
  for (std::size_t g = 0; g < dims.batch; ++g) {
    const T* ag = a + g * dims.m * dims.k;
    const T* rhs = detail::gemm_rhs(b + g * dims.k * dims.n, dims, scratch);
    T* cg = c + g * dims.m * dims.n;
    for (std::size_t i = 0; i < dims.m; ++i) detail::gemm_row(ag, rhs, cg + i * dims.n, i, dims);
  }
}

// Reference: one pass over the input in flat order, scattering into outputs.
template <typename T>
void sum_sq_axes(const T* x, const Shape& shape, const std::vector<bool>& reduce, T* out) {
  const detail::ReductionPlan plan = detail::plan_reduction(shape, reduce);
  std::fill(out, out + plan.out_size, T(0));
  const std::size_t n = numel(shape);
  std::vector<std::size_t> coord(shape.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t o = 0;
    for (std::size_t ax = 0; ax < shape.size(); ++ax) {
      if (!reduce[ax]) o = o * shape[ax] + coord[ax];
    }
    out[o] += x[i] * x[i];
    for (std::size_t ax = shape.size(); ax-- > 0;) {
      if (++coord[ax] < shape[ax]) break;
      coord[ax] = 0;
    }
  }
}

#define FREQVFX_INSTANTIATE(T)                                                                  \
  template void blur_planes<T>(const T*, T*, PlaneDims, std::span<const double>);               \
  template void blur_planes_adjoint<T>(const T*, T*, PlaneDims, std::span<const double>);       \
  template void gemm<T>(const T*, const T*, T*, GemmDims);                                      \
  template void sum_sq_axes<T>(const T*, const Shape&, const std::vector<bool>&, T*);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace serial
}  // namespace freqvfx::kernels
