// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "freqvfx/autodiff.hpp"
#include "freqvfx/hash.hpp"
#include "freqvfx/tensor.hpp"

namespace freqvfx {

/// Ordered, uniquely named collection of tensors. Insertion order is kept so
/// hashing and serialization are stable.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ParameterError("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }

  const Tensor<T>& get(std::string_view name) const { return entries_[position(name)].second; }
  Tensor<T>& get(std::string_view name) { return entries_[position(name)].second; }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  /// FNV-1a over names, shapes and raw bytes.
  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& [name, t] : entries_) {
      h.update(name);
      h.update(t);
    }
    return h.digest();
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, t] : entries_) out.add(name, t.template cast<U>());
    return out;
  }

 private:
  std::size_t position(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ParameterError("unknown parameter: " + std::string(name));
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Tape handles for the tensors of one or more ParamSets.
template <typename T>
class VarMap {
 public:
  /// Records every tensor of `set` on the tape, as a trainable parameter or a constant.
  void bind(ad::Tape<T>& tape, const ParamSet<T>& set, bool trainable) {
    for (const auto& [name, t] : set.entries()) {
      const ad::Var<T> v = trainable ? tape.parameter(t, name) : tape.constant(t);
      if (!vars_.emplace(name, v).second) throw ParameterError("parameter bound twice: " + name);
    }
  }

  ad::Var<T> operator[](std::string_view name) const {
    const auto it = vars_.find(std::string(name));
    if (it == vars_.end()) throw ParameterError("unbound parameter: " + std::string(name));
    return it->second;
  }

  bool contains(std::string_view name) const { return vars_.contains(std::string(name)); }

 private:
  std::unordered_map<std::string, ad::Var<T>> vars_;
};

}  // namespace freqvfx
