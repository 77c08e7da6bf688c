// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/denoiser.hpp"

#include <cmath>
#include <string>

#include "freqvfx/rng.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::diffusion {

namespace {

enum Stream : std::uint64_t { kBackboneStream = 1, kRouterStream = 2, kAdapterStream = 3 };

template <typename T>
Tensor<T> gaussian(const Shape& shape, double stddev, Rng& rng) {
  Tensor<T> t(shape);
  for (T& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

/// Zeroes the first `rows` rows of a [out, in] weight so it cannot write to the
/// patch channels of the residual stream.
template <typename T>
Tensor<T> mask_rows(Tensor<T> w, std::size_t rows) {
  const std::size_t in = w.dim(1);
  for (std::size_t i = 0; i < rows * in; ++i) w[i] = T(0);
  return w;
}

/// Gain of the cross-attention rows that write into the patch channels.
constexpr double kCrossReadout = 0.25;

std::string block_name(std::size_t block) { return "block" + std::to_string(block); }

/// Flat source index for [B, frames, S, P] patches of a [B, frames, C, h, w] tensor.
ad::Index patch_index(const DenoiserConfig& c, std::size_t batch, std::size_t frames) {
  const std::size_t p = c.patch, gw = c.width / p, S = c.spatial_tokens(), P = c.patch_dim();
  std::vector<std::size_t> idx(batch * frames * S * P);
  std::size_t o = 0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t ch = 0; ch < c.channels; ++ch)
          for (std::size_t dy = 0; dy < p; ++dy)
            for (std::size_t dx = 0; dx < p; ++dx) {
              const std::size_t i = (s / gw) * p + dy, j = (s % gw) * p + dx;
              idx[o++] = (((b * frames + t) * c.channels + ch) * c.height + i) * c.width + j;
            }
  return std::make_shared<const std::vector<std::size_t>>(std::move(idx));
}

/// Inverse of patch_index: for every latent element, its position among the patches.
ad::Index unpatch_index(const DenoiserConfig& c, std::size_t batch) {
  const ad::Index forward = patch_index(c, batch, c.frames);
  std::vector<std::size_t> inv(forward->size());
  for (std::size_t k = 0; k < forward->size(); ++k) inv[(*forward)[k]] = k;
  return std::make_shared<const std::vector<std::size_t>>(std::move(inv));
}

template <typename T>
ad::Var<T> attend(ad::Var<T> q, ad::Var<T> k, ad::Var<T> v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.shape().back()));
  const ad::Var<T> weights = ad::softmax_last(ad::scale(ad::bmm(q, k, true), scale), 1.0);
  return ad::bmm(weights, v, false);
}

template <typename T>
ad::Var<T> self_attention(const VarMap<T>& vars, const Model<T>& model, ad::Var<T> x,
                          ad::Var<T> pi, std::size_t block, bool temporal) {
  const DenoiserConfig& c = model.config;
  const std::size_t B = x.shape()[0], F = c.frames, S = c.spatial_tokens(), d = c.model_dim;
  const double s = c.moe.scaling();
  const std::string name = block_name(block);
  const auto project = [&](const char* proj, ad::Var<T> in) {
    const std::string prefix = name + "." + proj;
    return moe::moe_forward(moe::adapter_vars(vars, prefix, c.moe.experts), s, pi,
                            vars[prefix + ".w"], in);
  };
  // Group tokens so attention runs over time per site, or over space per frame.
  const auto group = [&](ad::Var<T> t) {
    if (!temporal) return ad::reshape(t, Shape{B * F, S, d});
    return ad::reshape(ad::permute(ad::reshape(t, Shape{B, F, S, d}), {0, 2, 1, 3}), Shape{B * S, F, d});
  };
  const auto ungroup = [&](ad::Var<T> t) {
    if (!temporal) return ad::reshape(t, Shape{B, F * S, d});
    return ad::reshape(ad::permute(ad::reshape(t, Shape{B, S, F, d}), {0, 2, 1, 3}), Shape{B, F * S, d});
  };
  const ad::Var<T> ctx = attend(group(project("q", x)), group(project("k", x)), group(project("v", x)));
  return project("o", ungroup(ctx));
}

template <typename T>
ad::Var<T> add_bias(ad::Var<T> x, ad::Var<T> bias) {
  return ad::add(x, ad::broadcast_to(bias, x.shape()));
}

}  // namespace

void DenoiserConfig::validate() const {
  if (frames < 2) throw ParameterError("the denoiser needs at least two frames");
  if (channels == 0 || patch == 0 || height % patch != 0 || width % patch != 0 || height == 0 ||
      width == 0) {
    throw ParameterError("latent height and width must be positive multiples of the patch size");
  }
  if (model_dim % 2 != 0 || model_dim <= patch_dim()) {
    throw ParameterError("model width must be even and larger than the patch size " +
                         std::to_string(patch_dim()));
  }
  if (text_tokens == 0) throw ParameterError("need at least one text token");
  moe.validate();
  spectral::validate(fei);
}

template <typename T>
Model<T> init_model(const DenoiserConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.model_dim, P = config.patch_dim(), N = config.tokens();
  const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
  Model<T> m;
  m.config = config;

  Rng rng(seed, kBackboneStream);
  ParamSet<T>& bb = m.backbone;
  Tensor<T> embed(Shape{d, P}), head(Shape{P, d});
  for (std::size_t i = 0; i < P; ++i) {
    embed[i * P + i] = T(1);
    head[i * d + i] = T(1);
  }
  bb.add("patch_in.w", std::move(embed));
  Tensor<T> pos = gaussian<T>(Shape{N, d}, 1.0, rng);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t i = 0; i < P; ++i) pos[n * d + i] = T(0);
  bb.add("pos", std::move(pos));
  bb.add("time.w1", gaussian<T>(Shape{d, d}, wstd, rng));
  bb.add("time.b1", Tensor<T>(Shape{d}));
  bb.add("time.w2", mask_rows(gaussian<T>(Shape{d, d}, wstd, rng), P));
  bb.add("time.b2", Tensor<T>(Shape{d}));
  for (std::size_t b = 0; b < kBlocks; ++b) {
    for (const char* p : kProjections) {
      Tensor<T> w = gaussian<T>(Shape{d, d}, wstd, rng);
      if (std::string(p) == "o") w = mask_rows(std::move(w), P);
      bb.add(block_name(b) + "." + p + ".w", std::move(w));
    }
  }
  for (const char* p : kProjections) {
    Tensor<T> w = gaussian<T>(Shape{d, d}, wstd, rng);
    if (std::string(p) == "o") {
      for (std::size_t i = 0; i < P * d; ++i) w[i] *= static_cast<T>(kCrossReadout);
    }
    bb.add(std::string("cross.") + p + ".w", std::move(w));
  }
  bb.add("image.w", gaussian<T>(Shape{d, P}, 1.0 / std::sqrt(static_cast<double>(P)), rng));
  bb.add("null", gaussian<T>(Shape{1, d}, 1.0, rng));
  bb.add("patch_out.w", std::move(head));
  bb.add("patch_out.b", Tensor<T>(Shape{P}));

  Rng router_rng(seed, kRouterStream);
  moe::store_router(moe::make_router<T>(config.moe, router_rng), "router", m.router);
  Rng adapter_rng(seed, kAdapterStream);
  for (std::size_t b = 0; b < kBlocks; ++b) {
    for (const char* p : kProjections) {
      moe::store_adapter(moe::make_adapter<T>(d, d, config.moe, adapter_rng),
                         block_name(b) + "." + p, m.adapters);
    }
  }
  return m;
}

template <typename T>
VarMap<T> bind_model(ad::Tape<T>& tape, const Model<T>& model, Trainable trainable) {
  VarMap<T> vars;
  vars.bind(tape, model.backbone, trainable.backbone);
  vars.bind(tape, model.router, trainable.router);
  vars.bind(tape, model.adapters, trainable.adapters);
  return vars;
}

template <typename T>
Tensor<T> timestep_features(const std::vector<std::size_t>& timesteps, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor<T> out(Shape{timesteps.size(), dim});
  for (std::size_t b = 0; b < timesteps.size(); ++b) {
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double angle = static_cast<double>(timesteps[b]) * freq;
      out[b * dim + k] = static_cast<T>(std::sin(angle));
      out[b * dim + half + k] = static_cast<T>(std::cos(angle));
    }
  }
  return out;
}

namespace {

template <typename T>
ad::Var<T> image_tokens(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                        const Conditioning<T>& cond) {
  const DenoiserConfig& c = model.config;
  require_shape(cond.image, 4, "image condition");
  if (cond.image.shape() != Shape{cond.image.dim(0), c.channels, c.height, c.width}) {
    throw ShapeError("image condition " + to_string(cond.image.shape()) + " does not match the latent frame");
  }
  const std::size_t B = cond.image.dim(0);
  const ad::Var<T> frame = tape.constant(cond.image);
  const ad::Var<T> patches =
      ad::gather(frame, Shape{B, c.spatial_tokens(), c.patch_dim()}, patch_index(c, B, 1));
  return ad::linear(patches, vars["image.w"]);
}

}  // namespace

template <typename T>
ad::Var<T> condition_tokens(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                            const Conditioning<T>& cond, std::optional<ad::Var<T>> embedding) {
  const DenoiserConfig& c = model.config;
  const ad::Var<T> image = image_tokens(vars, model, tape, cond);
  const std::size_t B = image.shape()[0];
  require_shape(cond.text, 3, "text tokens");
  if (cond.text.dim(0) != B || cond.text.dim(2) != c.model_dim) {
    throw ShapeError("text tokens " + to_string(cond.text.shape()) + " must be [" +
                     std::to_string(B) + ", L, " + std::to_string(c.model_dim) + "]");
  }
  std::vector<ad::Var<T>> parts{image, tape.constant(cond.text)};
  if (embedding) {
    require_shape(embedding->value(), 2, "VFX embedding");
    if (embedding->shape()[1] != c.model_dim) {
      throw ShapeError("VFX embedding " + to_string(embedding->shape()) + " must have width " +
                       std::to_string(c.model_dim));
    }
    parts.push_back(ad::broadcast_to(*embedding, Shape{B, embedding->shape()[0], c.model_dim}));
  }
  return ad::concat(parts, 1);
}

template <typename T>
ad::Var<T> null_tokens(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                       const Conditioning<T>& cond) {
  const ad::Var<T> image = image_tokens(vars, model, tape, cond);
  const std::size_t B = image.shape()[0];
  const ad::Var<T> null = ad::broadcast_to(vars["null"], Shape{B, 1, model.config.model_dim});
  return ad::concat(std::vector<ad::Var<T>>{image, null}, 1);
}

template <typename T>
ad::Var<T> routing(const VarMap<T>& vars, const Model<T>& model, ad::Tape<T>& tape,
                   const Tensor<T>& z_t) {
  const Tensor<T> descriptor = spectral::joint_descriptor(z_t, model.config.fei);
  return moe::route(tape, descriptor, moe::router_vars(vars, "router", model.config.moe.tau),
                    model.config.moe.top_k);
}

template <typename T>
ad::Var<T> denoise(const VarMap<T>& vars, const Model<T>& model, ad::Var<T> z_t,
                   const std::vector<std::size_t>& timesteps, ad::Var<T> context, ad::Var<T> pi) {
  const DenoiserConfig& c = model.config;
  ad::Tape<T>& tape = *z_t.tape;
  require_shape(z_t.value(), 5, "denoiser input");
  const std::size_t B = z_t.shape()[0], N = c.tokens(), d = c.model_dim, P = c.patch_dim();
  if (z_t.shape() != c.latent_shape(B)) {
    throw ShapeError("latent " + to_string(z_t.shape()) + " does not match the denoiser");
  }
  if (timesteps.size() != B) throw ShapeError("need one timestep per sample");
  if (context.value().rank() != 3 || context.shape()[0] != B || context.shape()[2] != d) {
    throw ShapeError("conditioning tokens " + to_string(context.shape()) + " must be [" +
                     std::to_string(B) + ", L, " + std::to_string(d) + "]");
  }

  const ad::Var<T> patches = ad::gather(z_t, Shape{B, N, P}, patch_index(c, B, c.frames));
  ad::Var<T> x = ad::linear(patches, vars["patch_in.w"]);
  x = ad::add(x, ad::broadcast_to(vars["pos"], Shape{B, N, d}));
  const ad::Var<T> features = tape.constant(timestep_features<T>(timesteps, d));
  const ad::Var<T> hidden = ad::gelu(add_bias(ad::linear(features, vars["time.w1"]), vars["time.b1"]));
  const ad::Var<T> temb = add_bias(ad::linear(hidden, vars["time.w2"]), vars["time.b2"]);
  x = ad::add(x, ad::broadcast_to(ad::reshape(temb, Shape{B, 1, d}), Shape{B, N, d}));

  x = ad::add(x, self_attention(vars, model, x, pi, 0, true));
  const ad::Var<T> q = ad::linear(x, vars["cross.q.w"]);
  const ad::Var<T> k = ad::linear(context, vars["cross.k.w"]);
  const ad::Var<T> v = ad::linear(context, vars["cross.v.w"]);
  x = ad::add(x, ad::linear(attend(q, k, v), vars["cross.o.w"]));
  x = ad::add(x, self_attention(vars, model, x, pi, 1, false));

  const ad::Var<T> out = add_bias(ad::linear(x, vars["patch_out.w"]), vars["patch_out.b"]);
  return ad::gather(out, c.latent_shape(B), unpatch_index(c, B));
}

template <typename T>
Tensor<T> denoise_step(const Model<T>& model, const Tensor<T>& z_t,
                       const std::vector<std::size_t>& timesteps, const Conditioning<T>& cond,
                       const Tensor<T>* embedding) {
  ad::Tape<T> tape;
  const VarMap<T> vars = bind_model(tape, model, {});
  std::optional<ad::Var<T>> emb;
  if (embedding) emb = tape.constant(*embedding);
  const ad::Var<T> context = condition_tokens(vars, model, tape, cond, emb);
  const ad::Var<T> pi = routing(vars, model, tape, z_t);
  return denoise(vars, model, tape.constant(z_t), timesteps, context, pi).value();
}

#define FREQVFX_INSTANTIATE(T)                                                                      \
  template Model<T> init_model<T>(const DenoiserConfig&, std::uint64_t);                             \
  template VarMap<T> bind_model<T>(ad::Tape<T>&, const Model<T>&, Trainable);                        \
  template ad::Var<T> condition_tokens<T>(const VarMap<T>&, const Model<T>&, ad::Tape<T>&,           \
                                          const Conditioning<T>&, std::optional<ad::Var<T>>);         \
  template ad::Var<T> null_tokens<T>(const VarMap<T>&, const Model<T>&, ad::Tape<T>&,                \
                                     const Conditioning<T>&);                                         \
  template ad::Var<T> routing<T>(const VarMap<T>&, const Model<T>&, ad::Tape<T>&, const Tensor<T>&); \
  template ad::Var<T> denoise<T>(const VarMap<T>&, const Model<T>&, ad::Var<T>,                      \
                                 const std::vector<std::size_t>&, ad::Var<T>, ad::Var<T>);            \
  template Tensor<T> denoise_step<T>(const Model<T>&, const Tensor<T>&,                               \
                                     const std::vector<std::size_t>&, const Conditioning<T>&,         \
                                     const Tensor<T>*);                                               \
  template Tensor<T> timestep_features<T>(const std::vector<std::size_t>&, std::size_t);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::diffusion
