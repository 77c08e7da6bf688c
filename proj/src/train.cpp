// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/train.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "freqvfx/tensor_ops.hpp"

namespace freqvfx::diffusion {

namespace {

/// Rows `rows` of a [N, ...] tensor stacked into [rows.size(), ...].
template <typename T>
Tensor<T> take_rows(const Tensor<T>& src, const std::vector<std::size_t>& rows) {
  Shape shape = src.shape();
  const std::size_t stride = src.size() / shape[0];
  shape[0] = rows.size();
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= src.dim(0)) throw ParameterError("row " + std::to_string(rows[r]) + " out of range");
    std::copy_n(src.data() + rows[r] * stride, stride, out.data() + r * stride);
  }
  return out;
}

}  // namespace

template <typename T>
NoisyBatch<T> sample_noisy_batch(const Tensor<T>& z0, const NoiseSchedule& schedule, Rng& rng) {
  if (z0.rank() == 0 || z0.dim(0) == 0) throw ParameterError("diffusion loss needs a nonempty batch");
  const std::size_t B = z0.dim(0), per = z0.size() / B;
  NoisyBatch<T> out{z0, Tensor<T>(z0.shape()), Tensor<T>(z0.shape()), {}};
  for (std::size_t b = 0; b < B; ++b) out.timesteps.push_back(rng.below(schedule.size()));
  for (T& v : out.eps.values()) v = static_cast<T>(rng.normal());
  for (std::size_t b = 0; b < B; ++b) {
    const T a = static_cast<T>(schedule.alpha(out.timesteps[b]));
    const T s = static_cast<T>(schedule.sigma(out.timesteps[b]));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out.z_t[i] = a * z0[i] + s * out.eps[i];
  }
  return out;
}

template <typename T>
ad::Var<T> diffusion_loss(ad::Tape<T>& tape, const NoisyBatch<T>& batch, const Predictor<T>& predict) {
  if (batch.z0.rank() == 0 || batch.z0.dim(0) == 0) {
    throw ParameterError("diffusion loss needs a nonempty batch");
  }
  const ad::Var<T> pred = predict(tape, tape.constant(batch.z_t), batch.timesteps);
  if (pred.shape() != batch.eps.shape()) {
    throw ShapeError("prediction " + to_string(pred.shape()) + " does not match the noise");
  }
  return ad::mean(ad::square(ad::sub(tape.constant(batch.eps), pred)));
}

template <typename T>
Predictor<T> model_predictor(const VarMap<T>& vars, const Model<T>& model, Conditioning<T> cond) {
  return [&vars, &model, cond = std::move(cond)](ad::Tape<T>& tape, ad::Var<T> z_t,
                                                 const std::vector<std::size_t>& timesteps) {
    const ad::Var<T> context = condition_tokens(vars, model, tape, cond, std::optional<ad::Var<T>>{});
    const ad::Var<T> pi = routing(vars, model, tape, z_t.value());
    return denoise(vars, model, z_t, timesteps, context, pi);
  };
}

template <typename T>
Conditioning<T> dataset_conditioning(const Tensor<T>& z0, const Tensor<T>& class_text,
                                     const std::vector<std::size_t>& labels) {
  require_shape(z0, 5, "clean latents");
  require_shape(class_text, 3, "class text tokens");
  const std::size_t B = z0.dim(0), F = z0.dim(1), frame = z0.size() / (B * F);
  if (labels.size() != B) throw ShapeError("need one label per sample");
  Conditioning<T> cond{Tensor<T>(Shape{B, z0.dim(2), z0.dim(3), z0.dim(4)}), take_rows(class_text, labels)};
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(z0.data() + b * F * frame, frame, cond.image.data() + b * frame);
  }
  return cond;
}

double stage1_lr(const Stage1Config& config, std::size_t step) {
  double scale = 1.0;
  if (config.warmup > 0 && step < config.warmup) {
    scale = static_cast<double>(step + 1) / static_cast<double>(config.warmup);
  }
  if (config.steps > 1) {
    const double progress = static_cast<double>(step) / static_cast<double>(config.steps - 1);
    const double f = config.final_lr_fraction;
    scale *= f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return config.adam.lr * scale;
}

std::vector<StepRecord> train_stage1(Model<float>& model, const synth::SynthDataset& dataset,
                                     const NoiseSchedule& schedule, const Stage1Config& config,
                                     const std::function<void(const StepRecord&)>& on_step) {
  if (dataset.size() == 0) throw ParameterError("training needs a nonempty dataset");
  if (config.batch == 0) throw ParameterError("batch size must be positive");
  const std::size_t K = dataset.classes.size();
  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < dataset.size(); ++i) members[dataset.labels[i]].push_back(i);

  optim::AdamW<float> opt(config.adam);
  Rng rng(config.seed, 0x5EED);
  std::vector<StepRecord> log;
  log.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    // Round-robin over classes that have samples.
    std::size_t cls = step % K;
    while (members[cls].empty()) cls = (cls + 1) % K;
    std::vector<std::size_t> rows(config.batch);
    for (std::size_t& r : rows) r = members[cls][rng.below(members[cls].size())];
    const TensorF z0 = take_rows(dataset.latents, rows);
    const NoisyBatch<float> batch = sample_noisy_batch(z0, schedule, rng);

    ad::Tape<float> tape;
    const VarMap<float> vars = bind_model(tape, model, {.router = true, .adapters = true});
    const Conditioning<float> cond =
        dataset_conditioning(z0, dataset.text, std::vector<std::size_t>(config.batch, cls));
    const ad::Var<float> context = condition_tokens(vars, model, tape, cond, std::optional<ad::Var<float>>{});
    const ad::Var<float> pi = routing(vars, model, tape, batch.z_t);
    const Predictor<float> predict = [&](ad::Tape<float>&, ad::Var<float> z_t,
                                         const std::vector<std::size_t>& t) {
      return denoise(vars, model, z_t, t, context, pi);
    };
    const ad::Var<float> loss = diffusion_loss(tape, batch, predict);

    StepRecord rec{step, static_cast<double>(loss.value().item()), {}, cls};
    if (!std::isfinite(rec.loss)) throw TrainingError("training loss is not finite", step);
    const std::size_t M = pi.shape()[1];
    rec.pi_mean.assign(M, 0.0);
    for (std::size_t b = 0; b < config.batch; ++b)
      for (std::size_t m = 0; m < M; ++m) rec.pi_mean[m] += pi.value()[b * M + m] / static_cast<double>(config.batch);

    const ad::Gradients<float> grads = tape.backward(loss);
    std::vector<optim::AdamW<float>::Update> updates;
    for (ParamSet<float>* set : {&model.router, &model.adapters}) {
      for (auto& [name, value] : set->entries()) updates.push_back({name, value, grads[vars[name]]});
    }
    opt.set_lr(stage1_lr(config, step));
    opt.step(updates);
    if (on_step) on_step(rec);
    log.push_back(std::move(rec));
  }
  return log;
}

std::vector<std::vector<double>> routing_by_class(const Model<float>& model,
                                                  const synth::SynthDataset& dataset,
                                                  const NoiseSchedule& schedule,
                                                  const std::vector<std::size_t>& timesteps,
                                                  std::uint64_t seed) {
  const std::size_t K = dataset.classes.size(), M = model.config.moe.experts;
  std::vector<std::vector<double>> sums(K, std::vector<double>(M, 0.0));
  std::vector<std::size_t> counts(K, 0);
  Rng rng(seed, 0xE7A1);
  for (const std::size_t t : timesteps) {
    TensorF eps(dataset.latents.shape());
    for (float& v : eps.values()) v = static_cast<float>(rng.normal());
    const TensorF z_t = forward_noise(dataset.latents, t, eps, schedule);
    ad::Tape<float> tape;
    const VarMap<float> vars = bind_model(tape, model, {});
    const ad::Var<float> pi = routing(vars, model, tape, z_t);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const std::size_t k = dataset.labels[i];
      ++counts[k];
      for (std::size_t m = 0; m < M; ++m) sums[k][m] += pi.value()[i * M + m];
    }
  }
  for (std::size_t k = 0; k < K; ++k)
    for (double& v : sums[k]) v /= static_cast<double>(std::max<std::size_t>(counts[k], 1));
  return sums;
}

SmoothedEnds smoothed_ends(const std::vector<double>& values, std::size_t window) {
  if (values.empty() || window == 0) throw ParameterError("smoothing needs values and a positive window");
  const std::size_t w = std::min(window, values.size());
  SmoothedEnds out;
  for (std::size_t i = 0; i < w; ++i) {
    out.initial += values[i] / static_cast<double>(w);
    out.final += values[values.size() - w + i] / static_cast<double>(w);
  }
  return out;
}

#define FREQVFX_INSTANTIATE(T)                                                                     \
  template NoisyBatch<T> sample_noisy_batch<T>(const Tensor<T>&, const NoiseSchedule&, Rng&);      \
  template ad::Var<T> diffusion_loss<T>(ad::Tape<T>&, const NoisyBatch<T>&, const Predictor<T>&);  \
  template Predictor<T> model_predictor<T>(const VarMap<T>&, const Model<T>&, Conditioning<T>);    \
  template Conditioning<T> dataset_conditioning<T>(const Tensor<T>&, const Tensor<T>&,             \
                                                   const std::vector<std::size_t>&);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::diffusion
