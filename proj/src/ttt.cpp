// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/ttt.hpp"

#include <cmath>
#include <string>

#include "freqvfx/optim.hpp"
#include "freqvfx/rng.hpp"
#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::ttt {

template <typename T>
double freq_constraint_loss(const Tensor<T>& gen, const Tensor<T>& ref, const spectral::FeiConfig& fei) {
  if (gen.shape() != ref.shape()) {
    throw ShapeError("generated " + to_string(gen.shape()) + " and reference " + to_string(ref.shape()) +
                     " latents differ in shape");
  }
  const Tensor<T> a = spectral::joint_descriptor(gen, fei), b = spectral::joint_descriptor(ref, fei);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::fabs(static_cast<double>(a[i]) - b[i]);
  return total / static_cast<double>(a.dim(0));
}

template <typename T>
ad::Var<T> freq_constraint_loss(ad::Var<T> gen, const Tensor<T>& ref, const spectral::FeiConfig& fei) {
  if (gen.shape() != ref.shape()) {
    throw ShapeError("generated " + to_string(gen.shape()) + " and reference " + to_string(ref.shape()) +
                     " latents differ in shape");
  }
  const ad::Var<T> target = gen.tape->constant(spectral::joint_descriptor(ref, fei));
  const ad::Var<T> diff = ad::abs(ad::sub(spectral::joint_descriptor(gen, fei), target));
  return ad::scale(ad::sum(diff), 1.0 / static_cast<double>(ref.dim(0)));
}

template <typename T>
Tensor<T> reference_latents(const Tensor<T>& ref, std::size_t t, const Tensor<T>& eps,
                            const diffusion::NoiseSchedule& schedule) {
  return diffusion::forward_noise(ref, t, eps, schedule);
}

template <typename T>
GenLatents<T> gen_latents_for_adapt(ad::Tape<T>& tape, const Tensor<T>& source, std::size_t t,
                                    const Tensor<T>& eps, const diffusion::NoiseSchedule& schedule,
                                    const diffusion::Predictor<T>& predict) {
  const double a = schedule.alpha(t), s = schedule.sigma(t);
  if (a < 1e-4) throw NumericGuardError("alpha_t below 1e-4 at t = " + std::to_string(t));
  const Tensor<T> input = diffusion::forward_noise(source, t, eps, schedule);
  const ad::Var<T> z_t = tape.constant(input);
  const ad::Var<T> eps_hat = predict(tape, z_t, std::vector<std::size_t>(source.dim(0), t));
  const ad::Var<T> x0 = ad::scale(ad::sub(z_t, ad::scale(eps_hat, s)), 1.0 / a);
  const ad::Var<T> renoised = ad::add(ad::scale(x0, a), ad::scale(tape.constant(eps), s));
  return {renoised, x0, eps_hat};
}

template <typename T>
diffusion::Predictor<T> embedding_predictor(const VarMap<T>& vars, const diffusion::Model<T>& model,
                                            diffusion::Conditioning<T> cond, ad::Var<T> embedding) {
  return [&vars, &model, cond = std::move(cond), embedding](
             ad::Tape<T>& tape, ad::Var<T> z_t, const std::vector<std::size_t>& timesteps) {
    const ad::Var<T> context =
        diffusion::condition_tokens(vars, model, tape, cond, std::optional<ad::Var<T>>(embedding));
    const ad::Var<T> pi = diffusion::routing(vars, model, tape, z_t.value());
    return diffusion::denoise(vars, model, z_t, timesteps, context, pi);
  };
}

template <typename T>
Tensor<T> static_source(const Tensor<T>& image, std::size_t frames) {
  require_shape(image, 4, "image condition");
  const std::size_t B = image.dim(0), frame = image.size() / B;
  Tensor<T> out(Shape{B, frames, image.dim(1), image.dim(2), image.dim(3)});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < frames; ++f)
      std::copy_n(image.data() + b * frame, frame, out.data() + (b * frames + f) * frame);
  return out;
}

std::vector<std::size_t> adapt_timesteps(const AdaptConfig& config,
                                         const diffusion::NoiseSchedule& schedule) {
  std::vector<std::size_t> out = config.timesteps;
  if (out.empty()) {
    for (std::size_t t = schedule.size() / 4; t < 3 * schedule.size() / 4; ++t) out.push_back(t);
  }
  if (out.empty()) throw ParameterError("adaptation timestep set is empty");
  for (const std::size_t t : out) {
    if (t >= schedule.size()) throw ParameterError("adaptation timestep " + std::to_string(t) + " out of range");
  }
  return out;
}

template <typename T>
Tensor<T> init_embedding(const AdaptConfig& config, std::size_t dim, const Tensor<T>* bias) {
  if (config.tokens == 0) throw ParameterError("embedding needs at least one token");
  Rng rng(config.seed, 0xE3BED);
  Tensor<T> out(Shape{config.tokens, dim});
  for (T& v : out.values()) v = static_cast<T>(rng.normal(0.0, config.init_std));
  if (bias) {
    require_shape(*bias, 2, "embedding bias tokens");
    if (bias->dim(1) != dim || bias->dim(0) == 0) throw ShapeError("embedding bias tokens must be [L, " + std::to_string(dim) + "]");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*bias)[i % bias->size()];
  }
  return out;
}

template <typename T>
AdaptResult<T> adapt(const diffusion::Model<T>& model, const AdaptProblem<T>& problem,
                     Tensor<T> embedding, const diffusion::NoiseSchedule& schedule,
                     const AdaptConfig& config) {
  if (config.steps == 0) throw ParameterError("adaptation needs at least one step");
  if (problem.source.shape() != problem.reference.shape()) {
    throw ShapeError("source and reference clips differ in shape");
  }
  if (problem.noise && problem.noise->shape() != problem.source.shape()) {
    throw ShapeError("fixed noise does not match the source clip");
  }
  const std::vector<std::size_t> S = adapt_timesteps(config, schedule);
  optim::AdamW<T> opt({.lr = config.lr, .weight_decay = 0.0});
  Rng rng(config.seed, 0xADA97);
  AdaptResult<T> result;
  Tensor<T> eps(problem.source.shape()), eps_ref;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const std::size_t t = S[rng.below(S.size())];
    if (problem.noise) {
      eps = *problem.noise;
    } else {
      for (T& v : eps.values()) v = static_cast<T>(rng.normal());
    }
    eps_ref = eps;
    if (!config.shared_noise) {
      for (T& v : eps_ref.values()) v = static_cast<T>(rng.normal());
    }

    ad::Tape<T> tape;
    const VarMap<T> vars = diffusion::bind_model(tape, model, {});
    const ad::Var<T> emb = tape.parameter(embedding, "embedding");
    const GenLatents<T> gen = gen_latents_for_adapt(
        tape, problem.source, t, eps, schedule, embedding_predictor(vars, model, problem.cond, emb));
    ad::Var<T> loss = freq_constraint_loss(gen.z_t, reference_latents(problem.reference, t, eps_ref, schedule),
                                           model.config.fei);
    if (config.diffusion_weight != 0.0) {
      const ad::Var<T> mse = ad::mean(ad::square(ad::sub(tape.constant(eps), gen.eps_hat)));
      loss = ad::add(loss, ad::scale(mse, config.diffusion_weight));
    }
    const double value = static_cast<double>(loss.value().item());
    if (!std::isfinite(value)) throw AdaptationError("adaptation loss is not finite", step);
    const ad::Gradients<T> grads = tape.backward(loss);
    opt.step({{"embedding", embedding, grads[emb]}});
    result.trace.push_back({step, t, value});
  }
  result.embedding = std::move(embedding);
  return result;
}

#define FREQVFX_INSTANTIATE(T)                                                                           \
  template double freq_constraint_loss<T>(const Tensor<T>&, const Tensor<T>&, const spectral::FeiConfig&); \
  template ad::Var<T> freq_constraint_loss<T>(ad::Var<T>, const Tensor<T>&, const spectral::FeiConfig&);  \
  template Tensor<T> reference_latents<T>(const Tensor<T>&, std::size_t, const Tensor<T>&,               \
                                          const diffusion::NoiseSchedule&);                              \
  template GenLatents<T> gen_latents_for_adapt<T>(ad::Tape<T>&, const Tensor<T>&, std::size_t,           \
                                                  const Tensor<T>&, const diffusion::NoiseSchedule&,     \
                                                  const diffusion::Predictor<T>&);                       \
  template diffusion::Predictor<T> embedding_predictor<T>(const VarMap<T>&, const diffusion::Model<T>&,  \
                                                          diffusion::Conditioning<T>, ad::Var<T>);       \
  template Tensor<T> static_source<T>(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> init_embedding<T>(const AdaptConfig&, std::size_t, const Tensor<T>*);               \
  template AdaptResult<T> adapt<T>(const diffusion::Model<T>&, const AdaptProblem<T>&, Tensor<T>,        \
                                   const diffusion::NoiseSchedule&, const AdaptConfig&);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::ttt
