// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic latent videos with controlled spatial spectrum and dynamics.
// Every video is rescaled to unit RMS so classes differ in spectrum and
// motion, not in energy. Sample i of a dataset draws from Rng(seed, i).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx::synth {

struct VideoShape {
  std::size_t frames = 8;
  std::size_t channels = 4;
  std::size_t height = 8;
  std::size_t width = 8;
};

enum class SpatialBand { low, band, high };
enum class TemporalProfile { still, drift, flicker };

struct EffectClass {
  std::string name;
  SpatialBand band = SpatialBand::low;
  TemporalProfile temporal = TemporalProfile::still;
};

/// low_drift, low_static, band_flicker, high_flicker.
const std::vector<EffectClass>& effect_classes();
/// Throws ParameterError for unknown names.
const EffectClass& find_class(const std::string& name);

struct LowFreqParams {
  double smoothness = 2.0;  // blur sigma applied to white noise
  double drift = 0.2;       // phase advance per frame, radians
};

struct ParticleParams {
  double density = 1.0;           // fraction of pixels in the static particle layer
  std::size_t sparkle_sites = 2;  // flickering single-pixel sites per channel
  double flicker = 1.5;           // sparkle amplitude scale, re-drawn every frame
};

struct BandParams {
  double inner = 0.5;   // sigma of the narrow Gaussian in the difference of Gaussians
  double outer = 0.9;   // sigma of the wide one
  double flicker = 0.5; // per-frame gain jitter amplitude
};

/// Heavily blurred noise fields moving along a slow rotation between two
/// smooth fields. drift = 0 gives a static video. Output [1, T, C, h, w].
TensorF gen_lowfreq_field(std::uint64_t seed, const VideoShape& shape, const LowFreqParams& p = {},
                          std::uint64_t stream = 0);

/// A static checker-signed particle texture plus a few isolated sparkle sites
/// whose amplitude is re-drawn every frame.
TensorF gen_highfreq_particles(std::uint64_t seed, const VideoShape& shape,
                               const ParticleParams& p = {}, std::uint64_t stream = 0);

/// Difference-of-Gaussians filtered noise with per-frame gain flicker.
TensorF gen_bandpass_texture(std::uint64_t seed, const VideoShape& shape, const BandParams& p = {},
                             double amplitude = 1.0, std::uint64_t stream = 0);

TensorF generate(const EffectClass& effect, std::uint64_t seed, const VideoShape& shape,
                 std::uint64_t stream);

struct ClassCount {
  std::string name;
  std::size_t count = 0;
};

struct SynthDataset {
  TensorF latents;                 // [N, T, C, h, w]
  std::vector<std::size_t> labels; // index into `classes`
  std::vector<std::string> classes;
  TensorF text;                    // [K, text_tokens, text_dim], per-class tokens
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  /// [1, T, C, h, w] copy of sample i.
  TensorF sample(std::size_t i) const;
};

struct DatasetOptions {
  VideoShape shape;
  std::size_t text_tokens = 2;
  std::size_t text_dim = 64;
};

SynthDataset build_dataset(const std::vector<ClassCount>& spec, std::uint64_t seed,
                           const DatasetOptions& options = {});

/// The two-class set used for Stage-1 runs: 64 low_drift and 64 high_flicker.
std::vector<ClassCount> two_class_spec(std::size_t per_class = 64);

}  // namespace freqvfx::synth
