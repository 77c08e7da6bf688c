// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace freqvfx::diffusion {

NoiseSchedule NoiseSchedule::cosine(std::size_t steps, double offset) {
  if (steps == 0) throw ParameterError("schedule needs at least one step");
  const auto f = [&](double t) {
    const double c = std::cos((t / static_cast<double>(steps) + offset) / (1.0 + offset) *
                              std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> alphas(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    alphas[t] = std::sqrt(std::min(1.0, f(static_cast<double>(t)) / f0));
  }
  return NoiseSchedule(std::move(alphas));
}

NoiseSchedule::NoiseSchedule(std::vector<double> alphas) : alphas_(std::move(alphas)) {
  if (alphas_.empty()) throw ParameterError("schedule needs at least one step");
  sigmas_.resize(alphas_.size());
  for (std::size_t t = 0; t < alphas_.size(); ++t) {
    const double a = alphas_[t];
    if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("schedule alpha outside [0, 1]");
    if (t > 0 && a > alphas_[t - 1]) throw ParameterError("schedule alphas must not increase");
    sigmas_[t] = std::sqrt(1.0 - a * a);
  }
}

void NoiseSchedule::check(std::size_t t) const {
  if (t >= alphas_.size()) {
    throw ParameterError("timestep " + std::to_string(t) + " outside schedule of length " +
                         std::to_string(alphas_.size()));
  }
}

double NoiseSchedule::alpha(std::size_t t) const {
  check(t);
  return alphas_[t];
}

double NoiseSchedule::sigma(std::size_t t) const {
  check(t);
  return sigmas_[t];
}

std::vector<std::size_t> NoiseSchedule::sampling_timesteps(std::size_t steps) const {
  if (steps == 0 || steps > size()) {
    throw ParameterError("sampling steps must lie in [1, " + std::to_string(size()) + "]");
  }
  std::vector<std::size_t> out(steps);
  for (std::size_t i = 0; i < steps; ++i) out[steps - 1 - i] = i * size() / steps;
  return out;
}

template <typename T>
Tensor<T> forward_noise(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps,
                        const NoiseSchedule& schedule) {
  if (z0.shape() != eps.shape()) {
    throw ShapeError("noise shape " + to_string(eps.shape()) + " differs from latent " +
                     to_string(z0.shape()));
  }
  const T a = static_cast<T>(schedule.alpha(t));
  const T s = static_cast<T>(schedule.sigma(t));
  Tensor<T> out(z0.shape());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + s * eps[i];
  return out;
}

template Tensor<float> forward_noise<float>(const Tensor<float>&, std::size_t, const Tensor<float>&,
                                            const NoiseSchedule&);
template Tensor<double> forward_noise<double>(const Tensor<double>&, std::size_t,
                                              const Tensor<double>&, const NoiseSchedule&);

}  // namespace freqvfx::diffusion
