// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace freqvfx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand; argv[0] is the program name.
int run(const std::vector<std::string>& args);

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

/// Invariant suite behind `selfcheck`. Inputs are drawn from `seed`.
std::vector<Check> selfcheck(std::uint64_t seed);

/// The 52-byte FVL1 encoding of a 2x2 f32 tensor [1, 2, 3, 4] named "example.grid".
const std::vector<std::uint8_t>& golden_container();

}  // namespace freqvfx::cli
