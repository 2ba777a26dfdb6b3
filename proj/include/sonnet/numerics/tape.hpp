#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sonnet/errors.hpp"
#include "sonnet/numerics/tensor.hpp"

namespace sonnet {

/// A named learnable tensor together with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<T>(value.shape()); }
  std::size_t size() const noexcept { return value.size(); }
};

template <class T>
class Tape;

/// Handle to one node of a tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::ptrdiff_t axis) const { return value().extent(axis); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Ordered record of primitive operations. Nodes are appended in
/// evaluation order, so every node's inputs precede it and a reverse sweep
/// is a valid reverse topological order.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr); }

  Var<T> leaf(Parameter<T>& param) { return push(param.value, grad_enabled_, nullptr, &param); }

  /// Appends an op output. `inputs` decide whether the node needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& v : inputs) needs = needs || requires_grad(v.id);
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{}, nullptr);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of node `id`, allocated on first use.
  std::vector<T>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() == nodes_[id].value.size(); }

  /// Reverse sweep from a scalar loss. Parameter leaves accumulate into
  /// their Parameter::grad.
  void backward(Var<T> loss) {
    if (loss.tape != this) throw Error("backward: loss belongs to a different tape");
    if (value(loss.id).size() != 1) {
      throw DimensionError("backward: loss must be a scalar, got shape " + shape_string(value(loss.id).shape()));
    }
    if (!requires_grad(loss.id)) return;
    grad(loss.id)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || !has_grad(i)) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        auto& pg = n.param->grad;
        if (pg.shape() != n.value.shape()) pg = Tensor<T>(n.value.shape());
        for (std::size_t k = 0; k < n.grad.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  /// Drops every node and zeroes the gradients of the parameters it saw.
  void clear() {
    for (auto& n : nodes_) {
      if (n.param != nullptr) n.param->zero_grad();
    }
    nodes_.clear();
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Bytes held by node values and gradient buffers.
  std::size_t bytes_in_use() const noexcept {
    std::size_t b = 0;
    for (const auto& n : nodes_) b += (n.value.size() + n.grad.size()) * sizeof(T);
    return b;
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(backward), param});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable references across appends
  bool grad_enabled_ = true;
};

}  // namespace sonnet
