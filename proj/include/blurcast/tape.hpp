#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "blurcast/tensor.hpp"

namespace blurcast {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Append-only record of a forward computation. Node ids are assigned in
/// creation order, so inputs always precede the nodes that consume them and
/// backward() only has to sweep ids in reverse.
///
/// A tape belongs to one thread for its whole life.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// With record=false, backward closures are dropped (inference only).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  /// Registers the result of an op. Throws NonFiniteError if `value` holds
  /// NaN or Inf. `backward` is kept only when some input needs a gradient.
  Var push(Tensor value, std::initializer_list<std::size_t> inputs, BackwardFn backward, const char* op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

  /// Gradient of the node being processed (valid inside a BackwardFn).
  std::span<const double> grad_out(std::size_t id) const { return {grad_ptr(id), nodes_[id].value.numel()}; }
  /// Accumulation buffer for an input, allocated on first use. Returns an
  /// empty span for inputs that do not need a gradient.
  std::span<double> grad_in(std::size_t id);

  void backward(Var loss);
  /// Gradient w.r.t. `v` after backward(); zeros when `v` did not
  /// influence the loss.
  Tensor grad(Var v) const;
  /// Same as grad() without a copy; empty when no gradient reached `v`.
  std::span<const double> grad_view(Var v) const {
    return has_grad(v.id) ? std::span<const double>(grad_ptr(v.id), nodes_[v.id].value.numel())
                          : std::span<const double>();
  }

  /// Number of nodes whose backward rule ran in the last sweep.
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    Tensor value;
    BackwardFn backward;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  // Gradients live in one arena; offset_[i] is node i's slice, touched_[i]
  // says whether it has been zeroed and written.
  bool has_grad(std::size_t id) const { return id < touched_.size() && touched_[id]; }
  double* grad_ptr(std::size_t id) const { return arena_.get() + offset_[id]; }

  std::unique_ptr<double[]> arena_;
  std::size_t arena_size_ = 0;
  std::vector<std::size_t> offset_;
  std::vector<char> touched_;
  std::size_t visited_ = 0;
};

}  // namespace blurcast
