#include "isoflow/graph.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

namespace isoflow::graph {

const char* to_string(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::negate: return "negate";
    case Op::add_bias: return "add_bias";
    case Op::tanh: return "tanh";
    case Op::tanh_deriv: return "tanh_deriv";
    case Op::square: return "square";
    case Op::sqrt: return "sqrt";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sum: return "sum";
    case Op::row_sum: return "row_sum";
    case Op::mean: return "mean";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
  }
  return "?";
}

namespace {

Var make(Op op, Matrix value, std::vector<std::shared_ptr<Node>> parents) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value = std::move(value);
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const auto& p) { return p->requires_grad; });
  node->parents = std::move(parents);
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::shape_mismatch,
          std::string(what) + ": operands " + shape_string(a.value()) + " and " +
              shape_string(b.value()));
}

void accumulate(Node& node, const Matrix& delta) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = delta;
  } else {
    node.grad += delta;
  }
}

// Reverse topological order (root first) over nodes that carry gradients.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

void propagate(Node& node) {
  const Matrix& g = node.grad;
  auto& p = node.parents;
  switch (node.op) {
    case Op::leaf:
      break;
    case Op::matmul:
      if (p[0]->requires_grad) accumulate(*p[0], g * p[1]->value.transpose());
      if (p[1]->requires_grad) accumulate(*p[1], p[0]->value.transpose() * g);
      break;
    case Op::transpose:
      accumulate(*p[0], g.transpose());
      break;
    case Op::add:
      accumulate(*p[0], g);
      accumulate(*p[1], g);
      break;
    case Op::sub:
      accumulate(*p[0], g);
      if (p[1]->requires_grad) accumulate(*p[1], -g);
      break;
    case Op::mul:
      if (p[0]->requires_grad) accumulate(*p[0], g.cwiseProduct(p[1]->value));
      if (p[1]->requires_grad) accumulate(*p[1], g.cwiseProduct(p[0]->value));
      break;
    case Op::scale:
      accumulate(*p[0], node.scalar * g);
      break;
    case Op::shift:
      accumulate(*p[0], g);
      break;
    case Op::negate:
      accumulate(*p[0], -g);
      break;
    case Op::add_bias:
      accumulate(*p[0], g);
      if (p[1]->requires_grad) accumulate(*p[1], g.colwise().sum());
      break;
    case Op::tanh:
      accumulate(*p[0], g.array() * (1.0 - node.value.array().square()));
      break;
    case Op::tanh_deriv: {
      // d/da (1 - tanh^2 a) = -2 tanh(a) (1 - tanh^2 a)
      const auto t = p[0]->value.array().tanh();
      accumulate(*p[0], (g.array() * (-2.0 * t * node.value.array())).matrix());
      break;
    }
    case Op::square:
      accumulate(*p[0], 2.0 * g.cwiseProduct(p[0]->value));
      break;
    case Op::sqrt:
      accumulate(*p[0], (g.array() / (2.0 * node.value.array())).matrix());
      break;
    case Op::exp:
      accumulate(*p[0], g.cwiseProduct(node.value));
      break;
    case Op::log:
      accumulate(*p[0], (g.array() / p[0]->value.array()).matrix());
      break;
    case Op::sum:
      accumulate(*p[0], Matrix::Constant(p[0]->value.rows(), p[0]->value.cols(), g(0, 0)));
      break;
    case Op::row_sum:
      accumulate(*p[0], g.replicate(1, p[0]->value.cols()));
      break;
    case Op::mean: {
      const double n = static_cast<double>(p[0]->value.size());
      accumulate(*p[0], Matrix::Constant(p[0]->value.rows(), p[0]->value.cols(), g(0, 0) / n));
      break;
    }
    case Op::concat: {
      const Index left = p[0]->value.cols();
      if (p[0]->requires_grad) accumulate(*p[0], g.leftCols(left));
      if (p[1]->requires_grad) accumulate(*p[1], g.rightCols(p[1]->value.cols()));
      break;
    }
    case Op::slice: {
      Matrix scattered = Matrix::Zero(p[0]->value.rows(), p[0]->value.cols());
      for (std::size_t k = 0; k < node.columns.size(); ++k) {
        scattered.col(node.columns[k]) += g.col(static_cast<Index>(k));
      }
      accumulate(*p[0], scattered);
      break;
    }
  }
}

}  // namespace

Var Var::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

void Var::zero_grad() { node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols()); }

void backward(const Var& loss) {
  require(loss.valid(), ErrorCode::invalid_argument, "backward: empty loss");
  require(loss.rows() == 1 && loss.cols() == 1, ErrorCode::invalid_argument,
          "backward: loss must be a scalar, got " + shape_string(loss.value()));
  if (!loss.requires_grad()) return;

  auto order = topo_order(loss.node().get());
  for (Node* node : order) {
    if (node->op != Op::leaf) node->grad.resize(0, 0);
  }
  if (loss.op() == Op::leaf) {
    accumulate(*loss.node(), Matrix::Ones(1, 1));
    return;
  }
  loss.node()->grad = Matrix::Ones(1, 1);
  for (Node* node : order) {
    if (node->op == Op::leaf) continue;
    if (node->grad.size() == 0) {
      node->grad = Matrix::Zero(node->value.rows(), node->value.cols());
    }
    propagate(*node);
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), ErrorCode::shape_mismatch,
          "matmul: " + shape_string(a.value()) + " times " + shape_string(b.value()));
  return make(Op::matmul, a.value() * b.value(), {a.node(), b.node()});
}

Var transpose(const Var& a) { return make(Op::transpose, a.value().transpose(), {a.node()}); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make(Op::add, a.value() + b.value(), {a.node(), b.node()});
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make(Op::sub, a.value() - b.value(), {a.node(), b.node()});
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  return make(Op::mul, a.value().cwiseProduct(b.value()), {a.node(), b.node()});
}

Var scale(const Var& a, double factor) {
  auto out = make(Op::scale, factor * a.value(), {a.node()});
  out.node()->scalar = factor;
  return out;
}

Var shift(const Var& a, double offset) {
  auto out = make(Op::shift, (a.value().array() + offset).matrix(), {a.node()});
  out.node()->scalar = offset;
  return out;
}

Var negate(const Var& a) { return make(Op::negate, -a.value(), {a.node()}); }

Var add_bias(const Var& a, const Var& bias) {
  require(bias.rows() == 1 && bias.cols() == a.cols(), ErrorCode::shape_mismatch,
          "add_bias: bias " + shape_string(bias.value()) + " for input " +
              shape_string(a.value()));
  Matrix value = a.value().rowwise() + bias.value().row(0);
  return make(Op::add_bias, std::move(value), {a.node(), bias.node()});
}

Var tanh(const Var& a) { return make(Op::tanh, a.value().array().tanh().matrix(), {a.node()}); }

Var tanh_deriv(const Var& a) {
  Matrix value = (1.0 - a.value().array().tanh().square()).matrix();
  return make(Op::tanh_deriv, std::move(value), {a.node()});
}

Var square(const Var& a) { return make(Op::square, a.value().array().square().matrix(), {a.node()}); }

Var sqrt(const Var& a) { return make(Op::sqrt, a.value().array().sqrt().matrix(), {a.node()}); }

Var exp(const Var& a) { return make(Op::exp, a.value().array().exp().matrix(), {a.node()}); }

Var log(const Var& a) { return make(Op::log, a.value().array().log().matrix(), {a.node()}); }

Var sum(const Var& a) { return make(Op::sum, Matrix::Constant(1, 1, a.value().sum()), {a.node()}); }

Var row_sum(const Var& a) { return make(Op::row_sum, a.value().rowwise().sum(), {a.node()}); }

Var mean(const Var& a) {
  require(a.value().size() > 0, ErrorCode::invalid_argument, "mean: empty operand");
  return make(Op::mean, Matrix::Constant(1, 1, a.value().mean()), {a.node()});
}

Var concat(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), ErrorCode::shape_mismatch,
          "concat: " + shape_string(a.value()) + " and " + shape_string(b.value()));
  Matrix value(a.rows(), a.cols() + b.cols());
  value << a.value(), b.value();
  return make(Op::concat, std::move(value), {a.node(), b.node()});
}

Var slice(const Var& a, std::vector<Index> columns) {
  Matrix value(a.rows(), static_cast<Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    require(columns[k] >= 0 && columns[k] < a.cols(), ErrorCode::shape_mismatch,
            "slice: column " + std::to_string(columns[k]) + " out of range for " +
                shape_string(a.value()));
    value.col(static_cast<Index>(k)) = a.value().col(columns[k]);
  }
  auto out = make(Op::slice, std::move(value), {a.node()});
  out.node()->columns = std::move(columns);
  return out;
}

}  // namespace isoflow::graph
