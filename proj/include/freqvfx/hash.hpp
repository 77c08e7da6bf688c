// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "freqvfx/tensor.hpp"

namespace freqvfx {

/// Incremental FNV-1a (64-bit). Used for parameter-freeze checks and for the
/// input hashes recorded in run manifests.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) noexcept {
    for (const std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= 0x100000001B3ULL;
    }
  }

  void update(const std::string& s) noexcept { update(std::as_bytes(std::span(s.data(), s.size()))); }

  template <typename T>
  void update(const Tensor<T>& t) noexcept {
    for (const std::size_t d : t.shape()) {
      const std::uint64_t v = d;
      update(std::as_bytes(std::span(&v, 1)));
    }
    update(std::as_bytes(t.values()));
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

std::string hex_digest(std::uint64_t value);

}  // namespace freqvfx
