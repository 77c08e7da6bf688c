// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "freqvfx/kernels.hpp"

namespace freqvfx {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ParameterError("softmax temperature must be positive, got " + std::to_string(tau));
  }
}

template <typename T>
Tensor<T> softmax_impl(const Tensor<T>& logits, double tau, const std::uint8_t* mask) {
  check_tau(tau);
  if (logits.rank() == 0 || logits.empty()) throw ShapeError("softmax of an empty tensor");
  const std::size_t m = logits.shape().back();
  const std::size_t rows = logits.size() / m;
  const T inv_tau = static_cast<T>(1.0 / tau);
  Tensor<T> out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * m;
    T* y = out.data() + r * m;
    const auto keep = [&](std::size_t j) { return mask == nullptr || mask[r * m + j] != 0; };
    // Non-finite logits propagate as NaN so optimization loops can report divergence.
    T peak = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (!keep(j)) continue;
      any = true;
      peak = std::isnan(in[j]) || std::isnan(peak) ? std::numeric_limits<T>::quiet_NaN() : std::max(peak, in[j]);
    }
    if (!any) throw ParameterError("softmax row has no selectable entry");
    T total = 0;
    for (std::size_t j = 0; j < m; ++j) {
      y[j] = keep(j) ? std::exp((in[j] - peak) * inv_tau) : T(0);
      total += y[j];
    }
    for (std::size_t j = 0; j < m; ++j) y[j] /= total;
  }
  return out;
}

}  // namespace

std::vector<bool> reduction_mask(const Shape& shape, const std::vector<std::size_t>& axes) {
  std::vector<bool> reduce(shape.size(), false);
  for (const std::size_t ax : axes) {
    if (ax >= shape.size()) {
      throw ShapeError("axis " + std::to_string(ax) + " invalid for shape " + to_string(shape));
    }
    if (reduce[ax]) throw ShapeError("axis " + std::to_string(ax) + " listed twice");
    reduce[ax] = true;
  }
  return reduce;
}

Shape reduced_shape(const Shape& shape, const std::vector<std::size_t>& axes) {
  const std::vector<bool> reduce = reduction_mask(shape, axes);
  Shape out;
  for (std::size_t ax = 0; ax < shape.size(); ++ax) {
    if (!reduce[ax]) out.push_back(shape[ax]);
  }
  return out;
}

template <typename T>
Tensor<T> gaussian_blur_depthwise(const Tensor<T>& x, double sigma) {
  require_shape(x, 4, "gaussian_blur_depthwise");
  const std::vector<double> weights = kernels::gaussian_weights(sigma);
  if (x.empty()) throw ShapeError("gaussian_blur_depthwise of an empty tensor");
  Tensor<T> out(x.shape());
  kernels::blur_planes(x.data(), out.data(), {x.dim(0) * x.dim(1), x.dim(2), x.dim(3)}, weights);
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits, double tau) {
  return softmax_impl(logits, tau, nullptr);
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, double tau, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != logits.size()) throw ShapeError("softmax mask size mismatch");
  return softmax_impl(logits, tau, mask.data());
}

template <typename T>
Tensor<T> reduce_sum_sq(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::vector<bool> reduce = reduction_mask(x.shape(), axes);
  Tensor<T> out(reduced_shape(x.shape(), axes));
  if (x.empty()) return out;
  kernels::sum_sq_axes(x.data(), x.shape(), reduce, out.data());
  return out;
}

template <typename T>
Tensor<T> time_mean(const Tensor<T>& z) {
  require_shape(z, 5, "time_mean");
  const Shape& s = z.shape();
  const std::size_t batch = s[0], frames = s[1], plane = s[2] * s[3] * s[4];
  if (frames == 0) throw ShapeError("time_mean: empty time axis");
  Tensor<T> out(Shape{batch, s[2], s[3], s[4]});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      T acc = 0;
      for (std::size_t t = 0; t < frames; ++t) acc += z[(b * frames + t) * plane + p];
      out[b * plane + p] = acc / static_cast<T>(frames);
    }
  }
  return out;
}

template <typename T>
Tensor<T> frame_diff_sq_mean(const Tensor<T>& z) {
  require_shape(z, 5, "frame_diff_sq_mean");
  const Shape& s = z.shape();
  const std::size_t batch = s[0], frames = s[1], plane = s[2] * s[3] * s[4];
  if (frames < 2) throw ShapeError("frame differences need at least two frames");
  Tensor<T> out(Shape{batch, s[2], s[3], s[4]});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      T acc = 0;
      for (std::size_t t = 0; t + 1 < frames; ++t) {
        const T d = z[(b * frames + t + 1) * plane + p] - z[(b * frames + t) * plane + p];
        acc += d * d;
      }
      out[b * plane + p] = acc / static_cast<T>(frames - 1);
    }
  }
  return out;
}

template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& energies, double eps) {
  require_shape(energies, 2, "normalize_rows");
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ParameterError("epsilon must be positive, got " + std::to_string(eps));
  }
  const std::size_t rows = energies.dim(0), k = energies.dim(1);
  const T e = static_cast<T>(eps);
  Tensor<T> out(energies.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    T total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (energies[r * k + j] < T(0)) throw DomainError("negative band energy");
      total += energies[r * k + j];
    }
    const T denom = total + e;
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = energies[r * k + j] / denom;
  }
  return out;
}

#define FREQVFX_INSTANTIATE(T)                                                                      \
  template Tensor<T> gaussian_blur_depthwise<T>(const Tensor<T>&, double);                          \
  template Tensor<T> softmax<T>(const Tensor<T>&, double);                                          \
  template Tensor<T> masked_softmax<T>(const Tensor<T>&, double, const std::vector<std::uint8_t>&); \
  template Tensor<T> reduce_sum_sq<T>(const Tensor<T>&, const std::vector<std::size_t>&);          \
  template Tensor<T> time_mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> frame_diff_sq_mean<T>(const Tensor<T>&);                                       \
  template Tensor<T> normalize_rows<T>(const Tensor<T>&, double);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx
