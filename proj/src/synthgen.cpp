// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/synthgen.hpp"

#include <cmath>
#include <cstdlib>

#include "freqvfx/rng.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::synth {

namespace {

TensorD noise_planes(std::size_t channels, std::size_t h, std::size_t w, Rng& rng) {
  TensorD t(Shape{1, channels, h, w});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

/// Rescales to unit RMS; an all-zero video stays zero.
TensorF to_unit_rms(const TensorD& video) {
  double sq = 0.0;
  for (const double v : video.values()) sq += v * v;
  const double rms = std::sqrt(sq / static_cast<double>(video.size()));
  TensorF out(video.shape());
  if (rms == 0.0) return out;
  for (std::size_t i = 0; i < video.size(); ++i) out[i] = static_cast<float>(video[i] / rms);
  return out;
}

void check_shape(const VideoShape& s) {
  if (s.frames == 0 || s.channels == 0 || s.height == 0 || s.width == 0) {
    throw ParameterError("video shape must be nonzero in every axis");
  }
}

Shape video_shape(const VideoShape& s) { return {1, s.frames, s.channels, s.height, s.width}; }

}  // namespace

const std::vector<EffectClass>& effect_classes() {
  static const std::vector<EffectClass> classes{
      {"low_drift", SpatialBand::low, TemporalProfile::drift},
      {"low_static", SpatialBand::low, TemporalProfile::still},
      {"band_flicker", SpatialBand::band, TemporalProfile::flicker},
      {"high_flicker", SpatialBand::high, TemporalProfile::flicker},
  };
  return classes;
}

const EffectClass& find_class(const std::string& name) {
  for (const EffectClass& c : effect_classes()) {
    if (c.name == name) return c;
  }
  throw ParameterError("unknown effect class: " + name);
}

TensorF gen_lowfreq_field(std::uint64_t seed, const VideoShape& shape, const LowFreqParams& p,
                          std::uint64_t stream) {
  check_shape(shape);
  Rng rng(seed, stream);
  const std::size_t C = shape.channels, H = shape.height, W = shape.width, plane = C * H * W;
  const TensorD a = gaussian_blur_depthwise(noise_planes(C, H, W, rng), p.smoothness);
  const TensorD b = gaussian_blur_depthwise(noise_planes(C, H, W, rng), p.smoothness);
  TensorD video(video_shape(shape));
  for (std::size_t t = 0; t < shape.frames; ++t) {
    const double phase = p.drift * static_cast<double>(t);
    const double ca = std::cos(phase), sb = std::sin(phase);
    for (std::size_t i = 0; i < plane; ++i) video[t * plane + i] = ca * a[i] + sb * b[i];
  }
  return to_unit_rms(video);
}

TensorF gen_highfreq_particles(std::uint64_t seed, const VideoShape& shape, const ParticleParams& p,
                               std::uint64_t stream) {
  check_shape(shape);
  Rng rng(seed, stream);
  const std::size_t C = shape.channels, H = shape.height, W = shape.width, plane = C * H * W;
  TensorD texture(Shape{C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double sign = (i + j) % 2 == 0 ? 1.0 : -1.0;
        const double magnitude = 1.0 + 0.25 * rng.normal();
        if (rng.uniform() < p.density) texture[(c * H + i) * W + j] = sign * magnitude;
      }

  // Sparkle sites keep one pixel of margin and stay at least 3 apart, so each
  // one is an isolated impulse in the frame-difference proxy.
  std::vector<std::size_t> sites;
  if (H >= 3 && W >= 3) {
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<std::pair<std::size_t, std::size_t>> chosen;
      for (int attempt = 0; attempt < 200 && chosen.size() < p.sparkle_sites; ++attempt) {
        const std::size_t i = 1 + rng.below(H - 2), j = 1 + rng.below(W - 2);
        bool clear = true;
        for (const auto& [ci, cj] : chosen) {
          const auto gap = [](std::size_t x, std::size_t y) { return x > y ? x - y : y - x; };
          clear = clear && std::max(gap(i, ci), gap(j, cj)) >= 3;
        }
        if (clear) chosen.emplace_back(i, j);
      }
      for (const auto& [i, j] : chosen) sites.push_back((c * H + i) * W + j);
    }
  }

  TensorD video(video_shape(shape));
  for (std::size_t t = 0; t < shape.frames; ++t) {
    for (std::size_t i = 0; i < plane; ++i) video[t * plane + i] = texture[i];
    for (const std::size_t s : sites) video[t * plane + s] += p.flicker * rng.normal();
  }
  return to_unit_rms(video);
}

TensorF gen_bandpass_texture(std::uint64_t seed, const VideoShape& shape, const BandParams& p,
                             double amplitude, std::uint64_t stream) {
  check_shape(shape);
  if (!(p.inner > 0.0) || !(p.inner < p.outer)) {
    throw ParameterError("band-pass texture needs 0 < inner < outer");
  }
  Rng rng(seed, stream);
  const std::size_t C = shape.channels, H = shape.height, W = shape.width, plane = C * H * W;
  const TensorD n = noise_planes(C, H, W, rng);
  const TensorD narrow = gaussian_blur_depthwise(n, p.inner);
  const TensorD wide = gaussian_blur_depthwise(n, p.outer);
  TensorD video(video_shape(shape));
  for (std::size_t t = 0; t < shape.frames; ++t) {
    const double gain = amplitude * (1.0 + p.flicker * rng.uniform(-1.0, 1.0));
    for (std::size_t i = 0; i < plane; ++i) video[t * plane + i] = gain * (narrow[i] - wide[i]);
  }
  return to_unit_rms(video);
}

TensorF generate(const EffectClass& effect, std::uint64_t seed, const VideoShape& shape,
                 std::uint64_t stream) {
  switch (effect.band) {
    case SpatialBand::low: {
      LowFreqParams p;
      if (effect.temporal == TemporalProfile::still) p.drift = 0.0;
      return gen_lowfreq_field(seed, shape, p, stream);
    }
    case SpatialBand::band:
      return gen_bandpass_texture(seed, shape, {}, 1.0, stream);
    case SpatialBand::high:
      return gen_highfreq_particles(seed, shape, {}, stream);
  }
  throw InternalError("unhandled effect class");
}

TensorF SynthDataset::sample(std::size_t i) const {
  if (i >= size()) throw ParameterError("sample index out of range");
  const Shape& s = latents.shape();
  const std::size_t per = latents.size() / s[0];
  TensorF out(Shape{1, s[1], s[2], s[3], s[4]});
  std::copy(latents.data() + i * per, latents.data() + (i + 1) * per, out.data());
  return out;
}

SynthDataset build_dataset(const std::vector<ClassCount>& spec, std::uint64_t seed,
                           const DatasetOptions& options) {
  check_shape(options.shape);
  if (spec.empty()) throw ParameterError("dataset spec is empty");
  SynthDataset ds;
  ds.seed = seed;
  std::size_t total = 0;
  for (const ClassCount& cc : spec) {
    find_class(cc.name);
    if (cc.count < 1) throw ParameterError("class " + cc.name + " needs a positive count");
    for (const std::string& seen : ds.classes) {
      if (seen == cc.name) throw ParameterError("class listed twice: " + cc.name);
    }
    ds.classes.push_back(cc.name);
    total += cc.count;
  }
  const VideoShape& vs = options.shape;
  const std::size_t per = vs.frames * vs.channels * vs.height * vs.width;
  ds.latents = TensorF(Shape{total, vs.frames, vs.channels, vs.height, vs.width});
  std::size_t index = 0;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const EffectClass& effect = find_class(spec[k].name);
    for (std::size_t n = 0; n < spec[k].count; ++n, ++index) {
      const TensorF v = generate(effect, seed, vs, index);
      std::copy(v.data(), v.data() + per, ds.latents.data() + index * per);
      ds.labels.push_back(k);
    }
  }
  // Text tokens depend on the class name only, not on its position in the class list.
  ds.text = TensorF(Shape{spec.size(), options.text_tokens, options.text_dim});
  const std::size_t tokens = options.text_tokens * options.text_dim;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    std::uint64_t name_seed = 0;
    for (const char ch : spec[k].name) name_seed = splitmix64(name_seed ^ static_cast<unsigned char>(ch));
    Rng rng(seed, name_seed);
    for (std::size_t i = 0; i < tokens; ++i) ds.text[k * tokens + i] = static_cast<float>(rng.normal());
  }
  return ds;
}

std::vector<ClassCount> two_class_spec(std::size_t per_class) {
  return {{"low_drift", per_class}, {"high_flicker", per_class}};
}

}  // namespace freqvfx::synth
