#include "isoflow/mlp.hpp"

#include <cmath>
#include <random>

namespace isoflow {

using graph::Var;

const char* to_string(Activation a) {
  return a == Activation::tanh ? "tanh" : "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  fail(ErrorCode::invalid_argument, "unknown activation '" + name + "'");
}

MlpSpec MlpSpec::make(Index input, const std::vector<Index>& hidden, Index output,
                      Activation hidden_activation, std::uint64_t seed) {
  MlpSpec spec;
  spec.layer_widths.push_back(input);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(output);
  spec.activations.assign(hidden.size(), hidden_activation);
  spec.init_seed = seed;
  spec.validate();
  return spec;
}

void MlpSpec::validate() const {
  require(layer_widths.size() >= 2, ErrorCode::invalid_argument,
          "mlp spec needs at least two layer widths");
  for (Index w : layer_widths) {
    require(w >= 1, ErrorCode::invalid_argument, "mlp layer widths must be positive");
  }
  require(activations.size() == layer_widths.size() - 2, ErrorCode::invalid_argument,
          "mlp spec needs one activation per hidden layer");
}

std::vector<Matrix*> MlpParams::refs() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::size_t MlpParams::scalar_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  return n;
}

MlpParams zero_mlp(const MlpSpec& spec) {
  spec.validate();
  MlpParams params;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    params.weights.push_back(Matrix::Zero(spec.layer_widths[l], spec.layer_widths[l + 1]));
    params.biases.push_back(Matrix::Zero(1, spec.layer_widths[l + 1]));
  }
  return params;
}

MlpParams init_mlp(const MlpSpec& spec) {
  MlpParams params = zero_mlp(spec);
  std::mt19937_64 rng(spec.init_seed);
  for (auto& w : params.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  }
  return params;
}

MlpVars bind(const MlpParams& params, bool trainable) {
  MlpVars vars;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    vars.weights.push_back(trainable ? Var::parameter(params.weights[l])
                                     : Var::constant(params.weights[l]));
    vars.biases.push_back(trainable ? Var::parameter(params.biases[l])
                                    : Var::constant(params.biases[l]));
  }
  return vars;
}

MlpVars vars_from(const std::vector<Var>& leaves, std::size_t offset, std::size_t layers) {
  require(offset + 2 * layers <= leaves.size(), ErrorCode::shape_mismatch,
          "vars_from: not enough leaves for the network");
  MlpVars vars;
  for (std::size_t l = 0; l < layers; ++l) {
    vars.weights.push_back(leaves[offset + 2 * l]);
    vars.biases.push_back(leaves[offset + 2 * l + 1]);
  }
  return vars;
}

namespace {

void check_vars(const MlpSpec& spec, const MlpVars& vars) {
  require(vars.weights.size() == spec.layer_count() && vars.biases.size() == spec.layer_count(),
          ErrorCode::shape_mismatch, "mlp parameters do not match the layer count");
}

void check_input(const MlpSpec& spec, const Var& x, const char* what) {
  require(x.cols() == spec.input_width(), ErrorCode::shape_mismatch,
          std::string(what) + ": input has " + std::to_string(x.cols()) +
              " columns, network expects " + std::to_string(spec.input_width()));
}

bool is_tanh(const MlpSpec& spec, std::size_t layer) {
  return layer < spec.activations.size() && spec.activations[layer] == Activation::tanh;
}

// Runs the forward pass and returns the pre-activations of every hidden layer
// (the tangent rules need them) plus the network output.
struct Trace {
  std::vector<Var> pre_activations;
  Var output;
};

Trace trace_forward(const MlpSpec& spec, const MlpVars& vars, const Var& x) {
  Trace trace;
  Var h = x;
  const std::size_t layers = spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    Var a = graph::add_bias(graph::matmul(h, vars.weights[l]), vars.biases[l]);
    if (l + 1 == layers) {
      h = a;
    } else {
      trace.pre_activations.push_back(a);
      h = is_tanh(spec, l) ? graph::tanh(a) : a;
    }
  }
  trace.output = h;
  return trace;
}

}  // namespace

Var mlp_forward(const MlpSpec& spec, const MlpVars& vars, const Var& x) {
  check_vars(spec, vars);
  check_input(spec, x, "mlp_forward");
  return trace_forward(spec, vars, x).output;
}

Var mlp_jvp(const MlpSpec& spec, const MlpVars& vars, const Var& z, const Var& u) {
  check_vars(spec, vars);
  check_input(spec, z, "mlp_jvp");
  require(u.rows() == z.rows() && u.cols() == z.cols(), ErrorCode::shape_mismatch,
          "mlp_jvp: tangent " + shape_string(u.value()) + " for input " + shape_string(z.value()));
  const Trace trace = trace_forward(spec, vars, z);
  Var t = u;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    t = graph::matmul(t, vars.weights[l]);
    if (is_tanh(spec, l)) t = graph::mul(t, graph::tanh_deriv(trace.pre_activations[l]));
  }
  return t;
}

Var mlp_vjp(const MlpSpec& spec, const MlpVars& vars, const Var& x, const Var& u) {
  check_vars(spec, vars);
  check_input(spec, x, "mlp_vjp");
  require(u.rows() == x.rows() && u.cols() == spec.output_width(), ErrorCode::shape_mismatch,
          "mlp_vjp: cotangent " + shape_string(u.value()) + " for output width " +
              std::to_string(spec.output_width()));
  const Trace trace = trace_forward(spec, vars, x);
  Var c = u;
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    if (is_tanh(spec, l)) c = graph::mul(c, graph::tanh_deriv(trace.pre_activations[l]));
    c = graph::matmul(c, graph::transpose(vars.weights[l]));
  }
  return c;
}

Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& x) {
  return mlp_forward(spec, bind(params, false), Var::constant(x)).value();
}

Matrix mlp_jvp(const MlpSpec& spec, const MlpParams& params, const Matrix& z, const Matrix& u) {
  return mlp_jvp(spec, bind(params, false), Var::constant(z), Var::constant(u)).value();
}

Matrix mlp_vjp(const MlpSpec& spec, const MlpParams& params, const Matrix& x, const Matrix& u) {
  return mlp_vjp(spec, bind(params, false), Var::constant(x), Var::constant(u)).value();
}

Matrix mlp_jacobian(const MlpSpec& spec, const MlpParams& params, const RowVector& x) {
  const Index in = spec.input_width();
  require(x.size() == in, ErrorCode::shape_mismatch, "mlp_jacobian: input width mismatch");
  // One batch row per basis direction.
  Matrix z = x.replicate(in, 1);
  Matrix u = Matrix::Identity(in, in);
  return mlp_jvp(spec, params, z, u).transpose();
}

}  // namespace isoflow
