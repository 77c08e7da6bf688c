// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-time adaptation of a learnable VFX embedding. The generation branch is
// one denoiser call: x0_hat = (z_t - sigma_t eps_hat) / alpha_t, re-noised to
// t with the same eps. Its joint descriptor is pulled toward the descriptor of
// the noised reference under an L1 loss.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "freqvfx/denoiser.hpp"
#include "freqvfx/schedule.hpp"
#include "freqvfx/spectral.hpp"
#include "freqvfx/train.hpp"

namespace freqvfx::ttt {

/// Batch mean of |joint(gen) - joint(ref)|_1. Lies in [0, 4].
template <typename T>
double freq_constraint_loss(const Tensor<T>& gen, const Tensor<T>& ref,
                            const spectral::FeiConfig& fei = {});

/// Differentiable in `gen`; `ref` is recorded as a constant.
template <typename T>
ad::Var<T> freq_constraint_loss(ad::Var<T> gen, const Tensor<T>& ref,
                                const spectral::FeiConfig& fei = {});

/// The reference clip noised to t.
template <typename T>
Tensor<T> reference_latents(const Tensor<T>& ref, std::size_t t, const Tensor<T>& eps,
                            const diffusion::NoiseSchedule& schedule);

template <typename T>
struct GenLatents {
  ad::Var<T> z_t;      // alpha_t x0_hat + sigma_t eps
  ad::Var<T> x0;       // (input - sigma_t eps_hat) / alpha_t
  ad::Var<T> eps_hat;  // denoiser output at the input latent
};

/// Noises `source` to t with eps, predicts eps_hat, and re-noises the x0
/// estimate with the same eps. Throws NumericGuardError when alpha_t < 1e-4.
template <typename T>
GenLatents<T> gen_latents_for_adapt(ad::Tape<T>& tape, const Tensor<T>& source, std::size_t t,
                                    const Tensor<T>& eps, const diffusion::NoiseSchedule& schedule,
                                    const diffusion::Predictor<T>& predict);

/// The denoiser with `embedding` appended to the conditional tokens.
template <typename T>
diffusion::Predictor<T> embedding_predictor(const VarMap<T>& vars, const diffusion::Model<T>& model,
                                            diffusion::Conditioning<T> cond, ad::Var<T> embedding);

/// A static clip holding the image condition in every frame.
template <typename T>
Tensor<T> static_source(const Tensor<T>& image, std::size_t frames);

struct AdaptConfig {
  std::size_t steps = 100;
  double lr = 0.1;
  /// Adaptation timesteps; empty means [n / 4, 3n / 4) of the schedule.
  std::vector<std::size_t> timesteps;
  std::size_t tokens = 16;
  double init_std = 0.02;
  /// Same eps for the generated and the reference branch.
  bool shared_noise = true;
  /// Weight of the denoising loss added to the frequency loss.
  double diffusion_weight = 0.0;
  std::uint64_t seed = 0;
};

/// The timesteps adapt() draws from under `config`.
std::vector<std::size_t> adapt_timesteps(const AdaptConfig& config,
                                         const diffusion::NoiseSchedule& schedule);

/// N(0, init_std) tokens [L, d], plus `bias` tokens [Lb, d] tiled over L when given.
template <typename T>
Tensor<T> init_embedding(const AdaptConfig& config, std::size_t dim, const Tensor<T>* bias = nullptr);

template <typename T>
struct AdaptProblem {
  Tensor<T> reference;  // clean reference clip [B, T, C, h, w]
  Tensor<T> source;     // clean clip the generation branch is noised from
  diffusion::Conditioning<T> cond;
  /// When set, this eps is used at every step instead of fresh draws.
  std::optional<Tensor<T>> noise;
};

struct AdaptRecord {
  std::size_t step = 0;
  std::size_t t = 0;
  double loss = 0.0;
};

template <typename T>
struct AdaptResult {
  Tensor<T> embedding;
  std::vector<AdaptRecord> trace;
};

/// Optimizes only the embedding with Adam; every model parameter is a constant.
template <typename T>
AdaptResult<T> adapt(const diffusion::Model<T>& model, const AdaptProblem<T>& problem,
                     Tensor<T> embedding, const diffusion::NoiseSchedule& schedule,
                     const AdaptConfig& config);

}  // namespace freqvfx::ttt
