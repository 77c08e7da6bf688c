// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx {

/// Blurs every (batch, channel) plane of x[B, C, h, w] with a normalized 2-D
/// Gaussian, replicate padding at the borders.
template <typename T>
Tensor<T> gaussian_blur_depthwise(const Tensor<T>& x, double sigma);

/// Temperature softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits, double tau);

/// Softmax restricted to entries with mask != 0; masked entries come out as 0.
/// Every last-axis slice must keep at least one entry.
template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& logits, double tau, const std::vector<std::uint8_t>& mask);

/// Squares x elementwise and sums over `axes`. The result keeps the remaining
/// axes in order (a scalar when every axis is reduced).
template <typename T>
Tensor<T> reduce_sum_sq(const Tensor<T>& x, const std::vector<std::size_t>& axes);

/// z[B, T, C, h, w] -> mean over the T axis. T must be at least 1.
template <typename T>
Tensor<T> time_mean(const Tensor<T>& z);

/// z[B, T, C, h, w] -> mean over i of (z[:, i+1] - z[:, i])^2. T must be at least 2.
template <typename T>
Tensor<T> frame_diff_sq_mean(const Tensor<T>& z);

/// Row-wise E / (sum(E) + eps) for nonnegative E[B, K].
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& energies, double eps);

/// Shape that remains after removing `axes`; validates the axis set.
Shape reduced_shape(const Shape& shape, const std::vector<std::size_t>& axes);
std::vector<bool> reduction_mask(const Shape& shape, const std::vector<std::size_t>& axes);

template <typename T>
void require_shape(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(t.shape()));
  }
}

}  // namespace freqvfx
