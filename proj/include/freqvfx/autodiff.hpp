// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freqvfx/error.hpp"
#include "freqvfx/tensor.hpp"

namespace freqvfx::ad {

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

/// Gradients of trainable leaves, keyed by the leaf handle.
template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](Var<T> param) const {
    for (const auto& [id, grad] : grads_) {
      if (id == param.id) return grad;
    }
    throw ParameterError("no gradient recorded for node " + std::to_string(param.id));
  }

  std::size_t size() const noexcept { return grads_.size(); }

  void emplace(std::size_t id, Tensor<T> grad) { grads_.emplace_back(id, std::move(grad)); }

 private:
  std::vector<std::pair<std::size_t, Tensor<T>>> grads_;
};

struct BackwardOptions {
  /// Re-evaluate the whole tape first and require bit-exact agreement.
  bool verify_replay = false;
};

/// Linear record of primitive operations. Nodes are appended in evaluation
/// order, so inputs always precede their consumers. A tape has one writer.
template <typename T>
class Tape {
 public:
  using Inputs = std::vector<const Tensor<T>*>;
  using ForwardFn = std::function<Tensor<T>(const Inputs&)>;
  /// Receives the forward inputs, the output, the output gradient and one
  /// gradient slot per input (nullptr when that input needs no gradient).
  /// Slots are pre-zeroed accumulators; implementations must add into them.
  using BackwardFn = std::function<void(const Inputs&, const Tensor<T>&, const Tensor<T>&,
                                        const std::vector<Tensor<T>*>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push_leaf(std::move(value), false, {}); }

  Var<T> parameter(Tensor<T> value, std::string name = {}) {
    return push_leaf(std::move(value), true, std::move(name));
  }

  Var<T> record(std::string_view op, const std::vector<Var<T>>& inputs, ForwardFn forward,
                BackwardFn backward) {
    Node node;
    node.op = std::string(op);
    node.inputs.reserve(inputs.size());
    bool needs_grad = false;
    for (const Var<T>& v : inputs) {
      check_owned(v);
      node.inputs.push_back(v.id);
      needs_grad = needs_grad || nodes_[v.id].requires_grad;
    }
    node.value = forward(gather_inputs(node.inputs, nullptr));
    node.requires_grad = needs_grad;
    node.forward = std::move(forward);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }

  bool requires_grad(Var<T> v) const {
    check_owned(v);
    return nodes_[v.id].requires_grad;
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  std::vector<Var<T>> parameters() {
    std::vector<Var<T>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].is_parameter) out.push_back(Var<T>{this, i});
    }
    return out;
  }

  /// Re-runs every recorded forward from the leaf values and throws
  /// InternalError unless each output is reproduced bit-exactly.
  void verify_replay() const {
    std::vector<Tensor<T>> replayed(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      if (node.is_leaf) continue;
      Tensor<T> again = node.forward(gather_inputs(node.inputs, &replayed));
      if (!bit_equal(again, node.value)) {
        throw InternalError("tape replay mismatch at node " + std::to_string(i) + " (" + node.op +
                            ")");
      }
      replayed[i] = std::move(again);
    }
  }

  /// Exact reverse-mode gradients of a scalar loss for every parameter on the
  /// tape. Parameters that do not influence the loss get zero tensors.
  Gradients<T> backward(Var<T> loss, BackwardOptions options = {}) const {
    check_owned(loss);
    if (nodes_[loss.id].value.size() != 1) {
      throw ShapeError("backward requires a scalar loss, got shape " +
                       to_string(nodes_[loss.id].value.shape()));
    }
    if (options.verify_replay) verify_replay();

    std::vector<Tensor<T>> grads(nodes_.size());
    std::vector<bool> has_grad(nodes_.size(), false);
    if (nodes_[loss.id].requires_grad) {
      grads[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T(1));
      has_grad[loss.id] = true;
    }
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      const Node& node = nodes_[i];
      if (node.is_leaf || !has_grad[i]) continue;
      std::vector<Tensor<T>*> slots(node.inputs.size(), nullptr);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const std::size_t in = node.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (!has_grad[in]) {
          grads[in] = Tensor<T>(nodes_[in].value.shape());
          has_grad[in] = true;
        }
        slots[k] = &grads[in];
      }
      node.backward(gather_inputs(node.inputs, nullptr), node.value, grads[i], slots);
    }

    Gradients<T> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].is_parameter) continue;
      out.emplace(i, has_grad[i] ? std::move(grads[i]) : Tensor<T>(nodes_[i].value.shape()));
    }
    return out;
  }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    ForwardFn forward;
    BackwardFn backward;
    bool is_leaf = false;
    bool is_parameter = false;
    bool requires_grad = false;
  };

  Var<T> push_leaf(Tensor<T> value, bool trainable, std::string name) {
    Node node;
    node.op = trainable ? (name.empty() ? std::string("parameter") : std::move(name)) : "constant";
    node.value = std::move(value);
    node.is_leaf = true;
    node.is_parameter = trainable;
    node.requires_grad = trainable;
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  void check_owned(Var<T> v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw InternalError("variable does not belong to this tape");
    }
  }

  Inputs gather_inputs(const std::vector<std::size_t>& ids,
                       const std::vector<Tensor<T>>* replayed) const {
    Inputs in;
    in.reserve(ids.size());
    for (const std::size_t id : ids) {
      const bool use_replay = replayed != nullptr && !nodes_[id].is_leaf;
      in.push_back(use_replay ? &(*replayed)[id] : &nodes_[id].value);
    }
    return in;
  }

  // deque: references returned by value() stay valid while recording continues.
  std::deque<Node> nodes_;
};

}  // namespace freqvfx::ad
