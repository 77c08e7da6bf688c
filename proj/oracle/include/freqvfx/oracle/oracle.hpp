// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reference implementations used only by tests and `selfcheck`. Everything
// here is written as plain nested loops in long double and shares no code
// with the library kernels beyond the Tensor container itself.

#include <cstddef>
#include <functional>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx::oracle {

/// Direct 2-D convolution of every [h, w] plane of x[B, C, h, w] with an
/// explicitly built 2-D Gaussian (radius max(1, ceil(3 sigma)), normalized over
/// the full square, edge-clamped sampling).
TensorD blur(const TensorD& x, double sigma);

std::vector<double> softmax(const std::vector<double>& logits, double tau);

TensorD reduce_sum_sq(const TensorD& x, const std::vector<std::size_t>& axes);

TensorD appearance_proxy(const TensorD& z);
TensorD vfx_proxy(const TensorD& z);

struct Bands {
  TensorD coarse;
  TensorD band;
  TensorD detail;
};

Bands decompose(const TensorD& x, double sigma1, double sigma2);
/// E[B, 3]: per-sample sums of squares of coarse, band and detail.
TensorD band_energies(const Bands& bands);
TensorD normalize_energies(const TensorD& energies, double eps);
TensorD fei(const TensorD& x, double sigma1, double sigma2, double eps);
/// [B, 6]: fei(appearance) followed by fei(vfx).
TensorD joint_descriptor(const TensorD& z, double sigma1, double sigma2, double eps);
/// Batch mean of the L1 distance between joint descriptors.
double freq_loss(const TensorD& gen, const TensorD& ref, double sigma1, double sigma2, double eps);

struct Router {
  TensorD w1;  // [H, 6]
  TensorD b1;  // [H]
  TensorD w2;  // [M, H]
  TensorD b2;  // [M]
  double tau = 1.0;
};

/// Logits, softmax in extended precision, stable descending sort, keep the
/// first top_k, renormalize.
TensorD route(const TensorD& descriptor, const Router& router, std::size_t top_k);

struct Expert {
  TensorD a;  // [r, d_in]
  TensorD b;  // [d_out, r]
};

/// out[b, n, :] = W h + s * sum_m pi[b, m] * B_m (A_m h) for h[B, N, d_in].
TensorD moe_forward(const TensorD& h, const TensorD& w, const std::vector<Expert>& experts,
                    const TensorD& pi, double scaling);

/// Central finite differences of f at x, one coordinate at a time.
TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double step);

/// Same, restricted to the listed flat coordinates (others are left at zero).
TensorD numeric_gradient(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double step, const std::vector<std::size_t>& coords);

/// max |a - n| / max(max |n|, 1e-300) over the listed coordinates (all when empty).
double max_relative_error(const TensorD& analytic, const TensorD& numeric,
                          const std::vector<std::size_t>& coords = {});

}  // namespace freqvfx::oracle
