// SPDX-License-Identifier: Apache-2.0
#include "freqvfx/container.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <limits>
#include <unordered_set>

namespace freqvfx::io {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'V', 'L', '1'};
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

template <typename U>
void put(Bytes& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    const auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw TruncatedError(std::string("container truncated in ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put_tensor(Bytes& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  out.push_back(sizeof(T) == 4 ? kDtypeF32 : kDtypeF64);
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ShapeError("rank does not fit the container");
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (const std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("dimension does not fit the container");
    put(out, static_cast<std::uint32_t>(d));
  }
  for (const T v : t.values()) put(out, std::bit_cast<Bits>(v));
}

template <typename T>
Tensor<T> get_tensor(Reader& in, const Shape& shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  std::size_t count = 1;
  for (const std::size_t d : shape) {
    if (d != 0 && count > std::numeric_limits<std::size_t>::max() / sizeof(T) / d) {
      throw DecodeError("tensor payload size overflows");
    }
    count *= d;
  }
  const auto payload = in.take(count * sizeof(T), "tensor payload");
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < count; ++i) {
    Bits b = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) b |= static_cast<Bits>(static_cast<Bits>(payload[i * sizeof(T) + k]) << (8 * k));
    t[i] = std::bit_cast<T>(b);
  }
  return t;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, std::numeric_limits<uInt>::max());
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

Bytes write_container(const std::vector<Entry>& entries) {
  if (entries.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw ParameterError("too many container entries: " + std::to_string(entries.size()));
  }
  std::unordered_set<std::string_view> seen;
  Bytes out(std::begin(kMagic), std::end(kMagic));
  put(out, kContainerVersion);
  put(out, static_cast<std::uint16_t>(entries.size()));
  for (const Entry& e : entries) {
    if (!seen.insert(e.name).second) throw ParameterError("duplicate container entry: " + e.name);
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw ParameterError("entry name too long");
    put(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    std::visit([&](const auto& t) { put_tensor(out, t); }, e.value);
  }
  put(out, crc32(out));
  return out;
}

std::vector<Entry> read_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic)) throw TruncatedError("container shorter than its magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) throw BadMagicError("not an FVL1 container");
  if (bytes.size() < sizeof(kMagic) + 8) throw TruncatedError("container header truncated");

  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  const std::uint32_t stored = tail.get<std::uint32_t>("checksum");

  // Walk the layout before the checksum so a short file reports truncation.
  Reader in(body);
  in.take(sizeof(kMagic), "magic");
  const auto version = in.get<std::uint16_t>("version");
  const auto count = in.get<std::uint16_t>("entry count");
  std::vector<Entry> entries;
  std::unordered_set<std::string> seen;
  const auto fail_crc = [&] {
    if (crc32(body) != stored) throw CrcMismatchError("container checksum mismatch");
  };
  try {
    if (version != kContainerVersion) {
      throw DecodeError("unsupported container version " + std::to_string(version));
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto len = in.get<std::uint16_t>("entry name length");
      const auto raw = in.take(len, "entry name");
      std::string name(raw.begin(), raw.end());
      const auto dtype = in.get<std::uint8_t>("dtype");
      const auto rank = in.get<std::uint8_t>("rank");
      Shape shape(rank);
      for (std::size_t& d : shape) d = in.get<std::uint32_t>("dims");
      if (dtype == kDtypeF32) {
        entries.push_back({name, get_tensor<float>(in, shape)});
      } else if (dtype == kDtypeF64) {
        entries.push_back({name, get_tensor<double>(in, shape)});
      } else {
        throw DecodeError("unknown dtype tag " + std::to_string(dtype) + " for entry " + name);
      }
      if (!seen.insert(std::move(name)).second) {
        throw DecodeError("duplicate container entry: " + entries.back().name);
      }
    }
  } catch (const TruncatedError&) {
    throw;
  } catch (const DecodeError&) {
    // A damaged tag reports as a checksum failure, an intact unsupported file as itself.
    fail_crc();
    throw;
  }
  fail_crc();
  if (in.pos() != body.size()) throw DecodeError("trailing bytes after the last entry");
  return entries;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f.flush()) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_container(const std::filesystem::path& path, const std::vector<Entry>& entries) {
  write_file_atomic(path, write_container(entries));
}

std::vector<Entry> load_container(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  return read_container(bytes);
}

template <typename T>
const Tensor<T>& find_tensor(const std::vector<Entry>& entries, std::string_view name) {
  for (const Entry& e : entries) {
    if (e.name != name) continue;
    if (const auto* t = std::get_if<Tensor<T>>(&e.value)) return *t;
    throw DecodeError("entry " + e.name + " has an unexpected dtype");
  }
  throw DecodeError("container has no entry " + std::string(name));
}

bool bit_equal(const Entry& a, const Entry& b) {
  if (a.name != b.name || a.value.index() != b.value.index()) return false;
  return std::visit(
      [&](const auto& x) {
        using Tn = std::decay_t<decltype(x)>;
        return freqvfx::bit_equal(x, std::get<Tn>(b.value));
      },
      a.value);
}

template const TensorF& find_tensor<float>(const std::vector<Entry>&, std::string_view);
template const TensorD& find_tensor<double>(const std::vector<Entry>&, std::string_view);

}  // namespace freqvfx::io
