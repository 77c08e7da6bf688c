// SPDX-License-Identifier: Apache-2.0
#pragma once

// Toy latent video denoiser. Latents z[B, T, C, h, w] are cut into
// patch x patch tiles per frame, giving T * S tokens of width C * patch^2.
//
//   tokens -> temporal self-attention -> cross-attention -> spatial self-attention -> patches
//
// Both self-attention blocks route their q/k/v/o projections through a
// Freq-MoE adapter; the router is shared and sees the joint descriptor of the
// noisy input. Cross-attention reads the conditioning tokens and is frozen.
//
// Backbone layout: the residual stream has `model_dim` channels. The first
// C * patch^2 of them carry the patch itself and are what the output head
// reads. Positional and time embeddings and the self-attention outputs write
// only to the remaining channels; cross-attention adds a weak readout of the
// conditioning tokens to the patch channels. The untouched backbone therefore
// predicts eps_hat = z_t plus that readout, and any use of the noise level or
// the spatial structure of z_t has to come from the adapters.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "freqvfx/autodiff.hpp"
#include "freqvfx/freqmoe.hpp"
#include "freqvfx/ops.hpp"
#include "freqvfx/params.hpp"
#include "freqvfx/spectral.hpp"

namespace freqvfx::diffusion {

struct DenoiserConfig {
  std::size_t frames = 8;
  std::size_t channels = 4;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t patch = 2;
  std::size_t model_dim = 64;
  std::size_t text_tokens = 2;
  moe::MoeConfig moe;
  spectral::FeiConfig fei;

  std::size_t patch_dim() const { return channels * patch * patch; }
  std::size_t spatial_tokens() const { return (height / patch) * (width / patch); }
  std::size_t tokens() const { return frames * spatial_tokens(); }
  Shape latent_shape(std::size_t batch) const { return {batch, frames, channels, height, width}; }
  void validate() const;
};

/// The four projections of each self-attention block carry an adapter.
inline constexpr const char* kProjections[] = {"q", "k", "v", "o"};
inline constexpr std::size_t kBlocks = 2;

template <typename T>
struct Model {
  DenoiserConfig config;
  ParamSet<T> backbone;
  ParamSet<T> router;
  ParamSet<T> adapters;

  template <typename U>
  Model<U> cast() const {
    return {config, backbone.template cast<U>(), router.template cast<U>(),
            adapters.template cast<U>()};
  }
};

/// Deterministic initialization from `seed`: frozen backbone, router with a
/// zero output layer, adapters with B = 0.
template <typename T>
Model<T> init_model(const DenoiserConfig& config, std::uint64_t seed);

/// Image condition (the first clean frame) and per-sample text tokens.
template <typename T>
struct Conditioning {
  Tensor<T> image;  // [B, C, h, w]
  Tensor<T> text;   // [B, text_tokens, model_dim]
};

/// Which parameter groups are recorded as trainable on a tape.
struct Trainable {
  bool backbone = false;
  bool router = false;
  bool adapters = false;
};

template <typename T>
VarMap<T> bind_model(ad::Tape<T>& tape, const Model<T>& model, Trainable trainable);

/// [B, S + text_tokens (+ L), d]: image tokens, text tokens, then the optional
/// VFX embedding [L, d] shared across the batch.
template <typename T>
ad::Var<T> condition_tokens(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                            const Conditioning<T>& cond, std::optional<ad::Var<T>> embedding);

/// Unconditional branch for guidance: image tokens followed by the null token.
template <typename T>
ad::Var<T> null_tokens(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                       const Conditioning<T>& cond);

/// Routing weights pi[B, M] from the joint descriptor of z_t. The descriptor is
/// computed on plain values, so it is a constant on the tape.
template <typename T>
ad::Var<T> routing(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                   const Tensor<T>& z_t);

/// Predicted noise for z_t at per-sample timesteps.
template <typename T>
ad::Var<T> denoise(const VarMap<T>& vars, const Model<T>& model, ad::Var<T> z_t,
                   const std::vector<std::size_t>& timesteps, ad::Var<T> context, ad::Var<T> pi);

/// One plain evaluation (routing from z_t, conditional branch).
template <typename T>
Tensor<T> denoise_step(const Model<T>& model, const Tensor<T>& z_t,
                       const std::vector<std::size_t>& timesteps, const Conditioning<T>& cond,
                       const Tensor<T>* embedding = nullptr);

/// Sinusoidal features [B, dim] of integer timesteps.
template <typename T>
Tensor<T> timestep_features(const std::vector<std::size_t>& timesteps, std::size_t dim);

}  // namespace freqvfx::diffusion
