#include "htan/tape.hpp"

#include "htan/errors.hpp"

namespace htan {

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const { return tape_->grad(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw TapeError("input recorded on a different tape");
    if (nodes_[in.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_slot(std::size_t id) {
  auto& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
  return &n.grad;
}

Tensor Tape::grad(std::size_t id) const {
  const auto& n = nodes_.at(id);
  if (n.grad.empty()) return Tensor::zeros_like(n.value);
  return n.grad;
}

void Tape::backward(Var root) {
  if (differentiated_) throw TapeError("backward already ran on this tape; record a new forward pass first");
  if (&root.tape() != this) throw TapeError("root belongs to a different tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw TapeError("backward root must be scalar, got shape " + shape_to_string(nodes_[root.id()].value.shape()));
  }
  differentiated_ = true;
  if (!nodes_[root.id()].requires_grad) return;

  grad_slot(root.id())->storage()[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) {
      // The callback may allocate input slots, which never reallocates nodes_,
      // so this reference stays valid.
      n.backward(*this, n.grad);
    }
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    auto& pg = n.param->grad;
    if (pg.empty() || !pg.same_shape(n.value)) pg = Tensor::zeros_like(n.value);
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
  }
}

}  // namespace htan
