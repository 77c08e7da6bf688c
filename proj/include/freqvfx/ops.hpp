// SPDX-License-Identifier: Apache-2.0
#pragma once

// Differentiable primitive set recorded on an ad::Tape. This is intentionally
// the minimum the denoiser, router, adapters and frequency loss need.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "freqvfx/autodiff.hpp"

namespace freqvfx::ad {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

// Elementwise, equal shapes.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, double factor);
template <typename T> Var<T> square(Var<T> a);
template <typename T> Var<T> log1p(Var<T> a);
/// d|x|/dx is taken as 0 at x == 0.
template <typename T> Var<T> abs(Var<T> a);
/// tanh approximation of GELU.
template <typename T> Var<T> gelu(Var<T> a);

template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
template <typename T> Var<T> reduce_sum_sq(Var<T> a, const std::vector<std::size_t>& axes);

/// x[..., in] times w[out, in] transposed -> [..., out].
template <typename T> Var<T> linear(Var<T> x, Var<T> w);
/// Batched a[G, m, k] * b[G, k, n], or a * b^T with b[G, n, k] when trans_b.
template <typename T> Var<T> bmm(Var<T> a, Var<T> b, bool trans_b);

template <typename T> Var<T> softmax_last(Var<T> logits, double tau);
/// The mask is a constant: gradients never flow through the selection itself.
template <typename T>
Var<T> masked_softmax_last(Var<T> logits, double tau, std::vector<std::uint8_t> mask);

/// Depthwise Gaussian blur of x[B, C, h, w].
template <typename T> Var<T> blur(Var<T> x, double sigma);
/// z[B, T, C, h, w] -> mean over T.
template <typename T> Var<T> time_mean(Var<T> z);
/// z[B, T, C, h, w] -> mean over i of (z[:, i+1] - z[:, i])^2. Requires T >= 2.
template <typename T> Var<T> frame_diff_sq_mean(Var<T> z);
/// Row-wise E / (sum(E) + eps) for E[B, K].
template <typename T> Var<T> normalize_rows(Var<T> energies, double eps);

/// out[i] = a[index[i]]; the backward pass scatter-adds. Covers permutes,
/// broadcasts and slices.
template <typename T> Var<T> gather(Var<T> a, Shape out_shape, Index index);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);
/// out[b, ...] = w[b] * x[b, ...] for x[B, ...], w[B].
template <typename T> Var<T> scale_leading(Var<T> x, Var<T> w);

// Index-map helpers built on gather.
template <typename T> Var<T> permute(Var<T> a, const std::vector<std::size_t>& axes);
/// Broadcasts a to `shape`, aligning trailing axes (size-1 or missing axes repeat).
template <typename T> Var<T> broadcast_to(Var<T> a, const Shape& shape);
/// Selects index `i` along the last axis, dropping that axis.
template <typename T> Var<T> select_last(Var<T> a, std::size_t i);

Index permute_index(const Shape& in, const std::vector<std::size_t>& axes, Shape& out_shape);
Index broadcast_index(const Shape& in, const Shape& out);

}  // namespace freqvfx::ad
