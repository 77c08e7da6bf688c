// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/tensor.hpp"

#include <atomic>

namespace freqvfx {

namespace {
std::atomic<bool> g_checked{true};
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void set_checked_mode(bool enabled) { g_checked.store(enabled, std::memory_order_relaxed); }

bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }

}  // namespace freqvfx
