// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/optim.hpp"

#include <cmath>

#include "freqvfx/error.hpp"

namespace freqvfx::optim {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ParameterError("Adam epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ParameterError("weight decay must be >= 0");
}

template <typename T>
AdamW<T>::AdamW(AdamConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void AdamW<T>::set_lr(double lr) {
  AdamConfig next = config_;
  next.lr = lr;
  next.validate();
  config_ = next;
}

template <typename T>
void AdamW<T>::step(const std::vector<Update>& updates) {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (const Update& u : updates) {
    if (u.value.shape() != u.grad.shape()) {
      throw ShapeError("gradient shape " + to_string(u.grad.shape()) + " does not match parameter " +
                       std::string(u.name));
    }
    Moments& s = state_[std::string(u.name)];
    if (s.m.empty()) {
      s.m.assign(u.value.size(), 0.0);
      s.v.assign(u.value.size(), 0.0);
    }
    if (s.m.size() != u.value.size()) throw ShapeError("parameter " + std::string(u.name) + " changed size");
    for (std::size_t i = 0; i < u.value.size(); ++i) {
      const double g = static_cast<double>(u.grad[i]);
      s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
      s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
      if (config_.lr == 0.0) continue;
      double p = static_cast<double>(u.value[i]);
      p -= config_.lr * config_.weight_decay * p;
      p -= config_.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + config_.eps);
      u.value[i] = static_cast<T>(p);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace freqvfx::optim
