// SPDX-License-Identifier: Apache-2.0
#pragma once

// FVL1 tensor container. Layout, all integers little-endian:
//   "FVL1" | version u16 | entry count u16
//   per entry: name length u16 | name bytes | dtype u8 (1 = f32, 2 = f64) |
//              rank u8 | dims u32 x rank | payload, row-major
//   CRC-32 (zlib polynomial) of every preceding byte, u32

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "freqvfx/tensor.hpp"

namespace freqvfx::io {

inline constexpr std::uint16_t kContainerVersion = 1;

using AnyTensor = std::variant<TensorF, TensorD>;

struct Entry {
  std::string name;
  AnyTensor value;
};

using Bytes = std::vector<std::uint8_t>;

/// Throws ParameterError on duplicate names or counts that do not fit the
/// header fields, ShapeError on dims above 2^32 - 1.
Bytes write_container(const std::vector<Entry>& entries);

/// Throws BadMagicError, TruncatedError or CrcMismatchError (all DecodeError);
/// other malformed input raises plain DecodeError.
std::vector<Entry> read_container(std::span<const std::uint8_t> bytes);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
Bytes read_file(const std::filesystem::path& path);

void save_container(const std::filesystem::path& path, const std::vector<Entry>& entries);
std::vector<Entry> load_container(const std::filesystem::path& path);

/// Entry lookup; throws DecodeError when the name is missing or the dtype differs.
template <typename T>
const Tensor<T>& find_tensor(const std::vector<Entry>& entries, std::string_view name);

bool bit_equal(const Entry& a, const Entry& b);

}  // namespace freqvfx::io
