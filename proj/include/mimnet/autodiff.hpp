#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mimnet/tensor.hpp"

namespace mimnet {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records executed operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so index order is a topological
/// order and backward() simply walks the node list in reverse. A node only
/// tracks gradients when at least one of its inputs does.
class Tape {
 public:
  /// Receives the value and gradient of the node being replayed; accumulates into parents.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var parameter(Tensor value) { return leaf(std::move(value), true); }

  /// Appends an op result. `backward` is dropped when no parent requires grad.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. Gradients of every node are reset first,
  /// so calling it twice yields identical results.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// grad[id] += delta. No-op for nodes that do not track gradients.
  void accumulate(std::size_t id, const Tensor& delta);
  Tensor& grad_buffer(std::size_t id) { return nodes_[id].grad; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable ops. All operate on rank-2 tensors and record onto the tape
// owning their first argument.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// x [m x n] + bias [1 x n] broadcast over rows.
Var add_row(Var x, Var bias);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
/// s [1 x 1] times every element of x.
Var scale_by(Var s, Var x);
/// Stacks along rows (axis 0) or columns (axis 1).
Var concat(const std::vector<Var>& parts, int axis);
Var reshape(Var x, std::size_t rows, std::size_t cols);
Var transpose(Var x);
Var sum(Var x);
Var mean(Var x);
/// axis 0 normalizes each column, axis 1 normalizes each row.
Var softmax(Var x, int axis);
Var sigmoid(Var x);
Var relu(Var x);
Var l2_norm(Var x);
/// Inner product of two tensors with equal element count, as 1x1.
Var dot(Var a, Var b);

// Value-level helpers used by kernels that do not need a tape.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor softmax(const Tensor& x, int axis);

}  // namespace mimnet
