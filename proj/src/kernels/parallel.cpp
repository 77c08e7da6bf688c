// SPDX-License-Identifier: Apache-2.0
#include <omp.h>

#include "kernel_bodies.hpp"

namespace freqvfx::kernels::parallel {

template <typename T>
void blur_planes(const T* in, T* out, PlaneDims dims, std::span<const double> weights) {
  detail::check_plane_dims(dims);
  const std::vector<T> g = detail::cast_weights<T>(weights);
  const std::size_t plane = dims.height * dims.width;
  const auto planes = static_cast<std::ptrdiff_t>(dims.planes);
#pragma omp parallel
  {
    std::vector<T> tmp(plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t p = 0; p < planes; ++p) {
      detail::blur_plane(in + p * plane, out + p * plane, tmp.data(), dims.height, dims.width,
                         g.data(), weights.size() / 2);
    }
  }
}

template <typename T>
void blur_planes_adjoint(const T* grad_out, T* grad_in, PlaneDims dims,
                         std::span<const double> weights) {
  detail::check_plane_dims(dims);
  const std::vector<T> g = detail::cast_weights<T>(weights);
  const std::size_t plane = dims.height * dims.width;
  const auto planes = static_cast<std::ptrdiff_t>(dims.planes);
#pragma omp parallel
  {
    std::vector<T> tmp(plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t p = 0; p < planes; ++p) {
      detail::blur_plane_adjoint(grad_out + p * plane, grad_in + p * plane, tmp.data(),
                                 dims.height, dims.width, g.data(), weights.size() / 2);
    }
  }
}

template <typename T>
void gemm(const T* a, const T* b, T* c, GemmDims dims) {
  // Small problems are not worth a parallel region; the row body is identical either way.
  const bool go_parallel = dims.batch * dims.m * dims.k * dims.n >= (1u << 15);
  std::vector<T> scratch;
  for (std::size_t g = 0; g < dims.batch; ++g) {
    const T* ag = a + g * dims.m * dims.k;
    const T* rhs = detail::gemm_rhs(b + g * dims.k * dims.n, dims, scratch);
    T* cg = c + g * dims.m * dims.n;
    const auto rows = static_cast<std::ptrdiff_t>(dims.m);
#pragma omp parallel for schedule(static) if (go_parallel)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      detail::gemm_row(ag, rhs, cg + i * dims.n, static_cast<std::size_t>(i), dims);
    }
  }
}

template <typename T>
void sum_sq_axes(const T* x, const Shape& shape, const std::vector<bool>& reduce, T* out) {
  const detail::ReductionPlan plan = detail::plan_reduction(shape, reduce);
  const auto outputs = static_cast<std::ptrdiff_t>(plan.out_size);
#pragma omp parallel
  {
    std::vector<std::size_t> counter;
#pragma omp for schedule(static)
    for (std::ptrdiff_t o = 0; o < outputs; ++o) {
      out[o] = detail::sum_sq_one(x, plan, static_cast<std::size_t>(o), counter);
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

}  // namespace freqvfx::kernels::parallel
