#include "blurcast/tape.hpp"

#include <algorithm>

namespace blurcast {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::initializer_list<std::size_t> inputs, BackwardFn backward, const char* op) {
  if (!value.all_finite()) throw NonFiniteError(std::string("non-finite output from ") + op);
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_[in].needs_grad;
  Node node{std::move(value), {}, needs};
  if (needs && record_) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

std::span<double> Tape::grad_in(std::size_t id) {
  if (!nodes_[id].needs_grad) return {};
  double* g = grad_ptr(id);
  const std::size_t n = nodes_[id].value.numel();
  if (!touched_[id]) {
    std::fill(g, g + n, 0.0);
    touched_[id] = 1;
  }
  return {g, n};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss lives on another tape");
  if (value(loss.id).numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss.id).shape()));
  offset_.assign(nodes_.size(), 0);
  touched_.assign(nodes_.size(), 0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    offset_[i] = total;
    if (nodes_[i].needs_grad) total += nodes_[i].value.numel();
  }
  if (total > arena_size_) {
    arena_ = std::make_unique_for_overwrite<double[]>(total);
    arena_size_ = total;
  }
  visited_ = 0;
  if (!nodes_[loss.id].needs_grad) return;
  *grad_ptr(loss.id) = 1.0;
  touched_[loss.id] = 1;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!touched_[i] || !node.backward) continue;
    node.backward(*this, i);
    ++visited_;
  }
}

Tensor Tape::grad(Var v) const {
  const auto& val = value(v.id);
  if (!has_grad(v.id)) return Tensor(val.shape());
  const double* g = grad_ptr(v.id);
  return Tensor(val.shape(), std::vector<double>(g, g + val.numel()));
}

}  // namespace blurcast
