// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx::diffusion {

/// Variance-preserving schedule: z_t = alpha_t z_0 + sigma_t eps with
/// alpha_t^2 + sigma_t^2 = 1 and alpha non-increasing in t.
class NoiseSchedule {
 public:
  /// alpha_bar(t) = f(t) / f(0), f(t) = cos^2(((t / n) + offset) / (1 + offset) * pi / 2).
  static NoiseSchedule cosine(std::size_t steps = 1000, double offset = 0.008);

  /// Explicit alphas in [0, 1], non-increasing.
  explicit NoiseSchedule(std::vector<double> alphas);

  std::size_t size() const noexcept { return alphas_.size(); }
  double alpha(std::size_t t) const;
  double sigma(std::size_t t) const;

  /// `steps` evenly strided timesteps floor(i * n / steps), returned in
  /// descending order (the order a sampler visits them).
  std::vector<std::size_t> sampling_timesteps(std::size_t steps) const;

 private:
  void check(std::size_t t) const;

  std::vector<double> alphas_;
  std::vector<double> sigmas_;
};

/// alpha_t * z0 + sigma_t * eps, elementwise.
template <typename T>
Tensor<T> forward_noise(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps,
                        const NoiseSchedule& schedule);

}  // namespace freqvfx::diffusion
