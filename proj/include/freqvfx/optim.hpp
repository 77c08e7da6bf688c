// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx::optim {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled: p -= lr * weight_decay * p, applied before the moment step.
  double weight_decay = 0.01;

  void validate() const;
};

/// Adam with decoupled weight decay. Moments are kept in double per named
/// tensor; the step counter advances once per call to step().
template <typename T>
class AdamW {
 public:
  struct Update {
    std::string_view name;
    Tensor<T>& value;
    const Tensor<T>& grad;
  };

  explicit AdamW(AdamConfig config);

  void step(const std::vector<Update>& updates);

  /// Overrides the learning rate for subsequent steps (schedules).
  void set_lr(double lr);

  std::size_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };

  AdamConfig config_;
  std::size_t steps_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

}  // namespace freqvfx::optim
