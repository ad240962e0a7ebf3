#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "stepattn/matrix.hpp"

namespace stepattn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Define-by-run reverse-mode differentiation tape.
///
/// Every operation appends a node holding its value and a closure that pushes the node's
/// gradient into its operands. Node ids are assigned in creation order, so reverse id order is a
/// valid topological order for backward(). A tape is single-threaded; build a fresh one per pass.
///
/// Leaf gradients accumulate across backward() calls until zero_grads() is called. Interior
/// gradients are reset at the start of every backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  void reserve(std::size_t nodes) { nodes_.reserve(nodes); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Differentiable input (a parameter).
  Var leaf(Matrix value);
  /// Non-differentiable input.
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward root with respect to `v`; empty when `v` needs no gradient.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var abs(Var a);
  Var sum_rows(Var a);
  /// Sum of every entry, 1×1.
  Var sum(Var a);
  Var concat_cols(Var a, Var b);
  /// Stacks 1×C rows (or any equal-width blocks) vertically.
  Var stack_rows(std::span<const Var> parts);
  Var softmax(Var a);
  /// m + bias broadcast over rows; bias holds exactly m.cols() entries (any orientation).
  Var add_bias(Var m, Var bias);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var row(Var a, std::size_t r);

  /// Backpropagates from a 1×1 root. Throws ShapeError for any other shape.
  void backward(Var root);
  void zero_grads();

 private:
  using Backprop = std::function<void(Tape&, const Matrix& grad_out)>;
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Backprop backprop;
  };

  Var push(Matrix value, bool requires_grad, Backprop backprop);
  /// Lazily allocated gradient buffer for an operand, or nullptr if it needs none.
  Matrix* grad_buffer(Var v);

  std::vector<Node> nodes_;
};

/// Central finite-difference gradient of `f` with respect to every entry of `params`.
/// Each entry is perturbed in place and restored bit-exactly before moving on.
std::vector<Matrix> fd_gradient(const std::function<double()>& f, std::span<Matrix* const> params,
                                double eps);

/// max |a - b| / max(1, |b|) over all entries of paired matrix lists.
double max_relative_error(std::span<const Matrix> analytic, std::span<const Matrix> reference);

}  // namespace stepattn
