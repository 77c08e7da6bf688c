// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "freqvfx/denoiser.hpp"
#include "freqvfx/schedule.hpp"

namespace freqvfx::diffusion {

struct SampleConfig {
  std::size_t steps = 30;
  double cfg_scale = 7.5;
  /// false: conditional branch only, no guidance.
  bool guidance = true;
  std::uint64_t seed = 0;
};

/// One denoising step as seen by the sampler.
template <typename T>
struct SampleStep {
  std::size_t t = 0;
  Tensor<T> descriptor;  // [B, 6] joint descriptor of z_t
  Tensor<T> pi_cond;     // routing used by the conditional branch
  Tensor<T> pi_uncond;   // routing used by the unconditional branch (empty without guidance)
};

template <typename T>
struct SampleResult {
  Tensor<T> video;  // [B, T, C, h, w]
  std::vector<SampleStep<T>> trajectory;
};

/// Deterministic DDIM sampling from N(0, 1) noise drawn with `config.seed`.
/// Guided prediction: cond + (scale - 1) * (cond - uncond). Routing is computed
/// once per step from z_t and fed to both branches.
template <typename T>
SampleResult<T> sample(const Model<T>& model, const Conditioning<T>& cond,
                       const NoiseSchedule& schedule, const SampleConfig& config,
                       const Tensor<T>* embedding = nullptr);

/// DDIM move from z_t to timestep `next` given eps_hat; without `next` returns the x0 estimate.
template <typename T>
Tensor<T> ddim_update(const Tensor<T>& z_t, const Tensor<T>& eps_hat, std::size_t t,
                      std::optional<std::size_t> next, const NoiseSchedule& schedule);

}  // namespace freqvfx::diffusion
