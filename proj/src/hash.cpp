// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/hash.hpp"

#include <cstdio>

namespace freqvfx {

std::string hex_digest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace freqvfx
