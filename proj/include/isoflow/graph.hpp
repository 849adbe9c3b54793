#pragma once

#include <memory>
#include <vector>

#include "isoflow/common.hpp"

// Reverse-mode differentiation over dense batch matrices.
//
// A `Var` is a handle to a node of a dynamically built, acyclic graph. Every
// primitive records its parents and has an exact adjoint rule. The adjoint of
// `tanh_deriv` is itself expressed in closed form, so tangents and cotangents
// propagated through an MLP with ordinary graph operations can be
// differentiated once more by `backward`.
namespace isoflow::graph {

enum class Op : std::uint8_t {
  leaf,
  matmul,
  transpose,
  add,
  sub,
  mul,
  scale,
  shift,
  negate,
  add_bias,
  tanh,
  tanh_deriv,
  square,
  sqrt,
  exp,
  log,
  sum,
  row_sum,
  mean,
  concat,
  slice,
};

const char* to_string(Op op);

struct Node {
  Matrix value;
  Matrix grad;
  Op op = Op::leaf;
  std::vector<std::shared_ptr<Node>> parents;
  double scalar = 0.0;             // scale / shift constant
  std::vector<Index> columns;      // slice column indices
  bool requires_grad = false;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Trainable leaf; gradients accumulate into it.
  static Var parameter(Matrix value);
  // Leaf that never receives a gradient.
  static Var constant(Matrix value);

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  Op op() const { return node_->op; }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }

  // Returns a constant leaf holding the same value, cutting the graph here.
  Var detach() const { return constant(value()); }

  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Reverse sweep from a 1x1 `loss`. Intermediate gradients are recomputed on
// every call; leaf gradients accumulate until `zero_grad` is called.
void backward(const Var& loss);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var shift(const Var& a, double offset);
Var negate(const Var& a);
// a (n x k) plus bias (1 x k) broadcast over rows.
Var add_bias(const Var& a, const Var& bias);
Var tanh(const Var& a);
// 1 - tanh(a)^2, differentiable again.
Var tanh_deriv(const Var& a);
Var square(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// Sum of all entries, 1x1.
Var sum(const Var& a);
// Per-row sum, n x 1.
Var row_sum(const Var& a);
// Mean of all entries, 1x1.
Var mean(const Var& a);
// Column-wise concatenation [a b].
Var concat(const Var& a, const Var& b);
// Gathers the listed columns in order; indices may repeat.
Var slice(const Var& a, std::vector<Index> columns);

// Per-row Euclidean norm, n x 1.
inline Var row_norm(const Var& a) { return sqrt(row_sum(square(a))); }

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return negate(a); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return shift(a, c); }
inline Var operator-(const Var& a, double c) { return shift(a, -c); }

}  // namespace isoflow::graph
