// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "freqvfx/denoiser.hpp"
#include "freqvfx/optim.hpp"
#include "freqvfx/rng.hpp"
#include "freqvfx/schedule.hpp"
#include "freqvfx/synthgen.hpp"

namespace freqvfx::diffusion {

/// Clean latents with their noise draw and per-sample timesteps.
template <typename T>
struct NoisyBatch {
  Tensor<T> z0;
  Tensor<T> eps;
  Tensor<T> z_t;
  std::vector<std::size_t> timesteps;
};

/// Draws t uniformly from the schedule and eps from N(0, 1) for every sample of z0.
template <typename T>
NoisyBatch<T> sample_noisy_batch(const Tensor<T>& z0, const NoiseSchedule& schedule, Rng& rng);

/// Maps a recorded z_t to the predicted noise. Tests swap in stubs here.
template <typename T>
using Predictor =
    std::function<ad::Var<T>(ad::Tape<T>&, ad::Var<T> z_t, const std::vector<std::size_t>& timesteps)>;

/// mean((eps - eps_hat)^2) over batch and elements.
template <typename T>
ad::Var<T> diffusion_loss(ad::Tape<T>& tape, const NoisyBatch<T>& batch, const Predictor<T>& predict);

/// The denoiser as a predictor: routing from z_t, conditional tokens from `cond`.
template <typename T>
Predictor<T> model_predictor(const VarMap<T>& vars, const Model<T>& model, Conditioning<T> cond);

/// Image condition = first frame of every clip, text = the class tokens of each label.
template <typename T>
Conditioning<T> dataset_conditioning(const Tensor<T>& z0, const Tensor<T>& class_text,
                                     const std::vector<std::size_t>& labels);

struct Stage1Config {
  std::size_t steps = 2000;
  std::size_t batch = 4;
  optim::AdamConfig adam{.lr = 1e-3};
  /// Linear ramp over the first `warmup` steps, then cosine decay to
  /// `final_lr_fraction` of the peak rate.
  std::size_t warmup = 200;
  double final_lr_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Learning rate used at `step` under the Stage-1 schedule.
double stage1_lr(const Stage1Config& config, std::size_t step);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<double> pi_mean;  // batch mean of the routing weights
  std::size_t class_id = 0;
};

/// Trains router and adapters on `dataset`; the backbone is bound as constants.
/// Each step draws one batch from a single class, cycling through classes.
std::vector<StepRecord> train_stage1(Model<float>& model, const synth::SynthDataset& dataset,
                                     const NoiseSchedule& schedule, const Stage1Config& config,
                                     const std::function<void(const StepRecord&)>& on_step = {});

/// Mean routing weights per class [K][M], over every sample of the class at
/// each of `timesteps`, with noise from `seed`.
std::vector<std::vector<double>> routing_by_class(const Model<float>& model,
                                                  const synth::SynthDataset& dataset,
                                                  const NoiseSchedule& schedule,
                                                  const std::vector<std::size_t>& timesteps,
                                                  std::uint64_t seed);

/// Means of the first and the last `window` values.
struct SmoothedEnds {
  double initial = 0.0;
  double final = 0.0;
};
SmoothedEnds smoothed_ends(const std::vector<double>& values, std::size_t window);

}  // namespace freqvfx::diffusion
