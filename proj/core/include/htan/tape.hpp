#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "htan/tensor.hpp"

namespace htan {

/// A learnable tensor together with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

class Tape;

/// Handle to a node recorded on a `Tape`. Cheap to copy; valid as long as the
/// tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient w.r.t. this node after `Tape::backward`; zeros when unreached.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in execution order, which is therefore a topological
/// order. A node carries a backward rule only when at least one of its inputs
/// requires a gradient; constants and everything computed purely from
/// constants are never visited by `backward`.
class Tape {
 public:
  /// Receives the gradient flowing into a node's output and distributes it to
  /// the node's inputs through `Tape::grad_slot`.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is readable via `Var::grad` but not tied to a Parameter.
  Var variable(Tensor value);
  /// Leaf bound to a parameter; `backward` adds into `p.grad`.
  Var param(Parameter& p);

  /// Appends a computed node. Used by primitives.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Propagates d(root)/d(node) to every node reachable from root. The root
  /// must be a one-element tensor. A tape may be differentiated only once.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Mutable gradient accumulator of a node, allocated on first use, or
  /// nullptr when the node does not require a gradient.
  Tensor* grad_slot(std::size_t id);
  Tensor grad(std::size_t id) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool differentiated() const noexcept { return differentiated_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  // Deque so that references to recorded values survive further recording.
  std::deque<Node> nodes_;
  bool differentiated_ = false;
};

/// How a parameter enters a tape: as a differentiated leaf or as a constant.
enum class Binding { trainable, frozen };

inline Var bind(Tape& tape, Parameter& p, Binding how) {
  return how == Binding::trainable ? tape.param(p) : tape.constant(p.value);
}

}  // namespace htan
