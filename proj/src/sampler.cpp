// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/sampler.hpp"

#include <cmath>

#include "freqvfx/rng.hpp"

namespace freqvfx::diffusion {

template <typename T>
Tensor<T> ddim_update(const Tensor<T>& z_t, const Tensor<T>& eps_hat, std::size_t t,
                      std::optional<std::size_t> next, const NoiseSchedule& schedule) {
  if (z_t.shape() != eps_hat.shape()) throw ShapeError("noise estimate does not match the latent");
  const double a = schedule.alpha(t), s = schedule.sigma(t);
  if (a < 1e-4) throw NumericGuardError("alpha_t below 1e-4 at t = " + std::to_string(t));
  const double a_next = next ? schedule.alpha(*next) : 1.0;
  const double s_next = next ? schedule.sigma(*next) : 0.0;
  Tensor<T> out(z_t.shape());
  for (std::size_t i = 0; i < z_t.size(); ++i) {
    const double x0 = (static_cast<double>(z_t[i]) - s * eps_hat[i]) / a;
    out[i] = static_cast<T>(a_next * x0 + s_next * eps_hat[i]);
  }
  return out;
}

template <typename T>
SampleResult<T> sample(const Model<T>& model, const Conditioning<T>& cond,
                       const NoiseSchedule& schedule, const SampleConfig& config,
                       const Tensor<T>* embedding) {
  if (!(config.cfg_scale >= 0.0) || !std::isfinite(config.cfg_scale)) {
    throw ParameterError("guidance scale must be >= 0");
  }
  if (config.steps == 0 || config.steps > schedule.size()) {
    throw ParameterError("sampling steps must lie in [1, " + std::to_string(schedule.size()) + "]");
  }
  const std::size_t B = cond.image.rank() > 0 ? cond.image.dim(0) : 0;
  SampleResult<T> result;
  result.video = Tensor<T>(model.config.latent_shape(B));
  Rng rng(config.seed, 0x5A3B1E);
  for (T& v : result.video.values()) v = static_cast<T>(rng.normal());

  const std::vector<std::size_t> grid = schedule.sampling_timesteps(config.steps);
  const T gain = static_cast<T>(config.cfg_scale - 1.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::size_t t = grid[i];
    ad::Tape<T> tape;
    const VarMap<T> vars = bind_model(tape, model, {});
    std::optional<ad::Var<T>> emb;
    if (embedding) emb = tape.constant(*embedding);
    const ad::Var<T> z = tape.constant(result.video);
    const ad::Var<T> pi = routing(vars, model, tape, result.video);
    const std::vector<std::size_t> ts(B, t);

    SampleStep<T> step{t, spectral::joint_descriptor(result.video, model.config.fei), pi.value(), {}};
    Tensor<T> eps_hat = denoise(vars, model, z, ts, condition_tokens(vars, model, tape, cond, emb), pi).value();
    if (config.guidance) {
      const Tensor<T>& uncond = denoise(vars, model, z, ts, null_tokens(vars, model, tape, cond), pi).value();
      step.pi_uncond = pi.value();
      for (std::size_t k = 0; k < eps_hat.size(); ++k) eps_hat[k] += gain * (eps_hat[k] - uncond[k]);
    }
    const std::optional<std::size_t> next = i + 1 < grid.size() ? std::optional(grid[i + 1]) : std::nullopt;
    result.video = ddim_update(result.video, eps_hat, t, next, schedule);
    result.trajectory.push_back(std::move(step));
  }
  return result;
}

#define FREQVFX_INSTANTIATE(T)                                                                    \
  template Tensor<T> ddim_update<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,              \
                                    std::optional<std::size_t>, const NoiseSchedule&);            \
  template SampleResult<T> sample<T>(const Model<T>&, const Conditioning<T>&, const NoiseSchedule&, \
                                     const SampleConfig&, const Tensor<T>*);

FREQVFX_INSTANTIATE(float)
FREQVFX_INSTANTIATE(double)
#undef FREQVFX_INSTANTIATE

}  // namespace freqvfx::diffusion
