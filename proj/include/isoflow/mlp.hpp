#pragma once

#include <cstdint>
#include <vector>

#include "isoflow/graph.hpp"

namespace isoflow {

enum class Activation : std::uint8_t { tanh, identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Fully connected network. `layer_widths` lists input, hidden and output
// widths; `activations` has one entry per hidden layer. The output layer is
// always affine.
struct MlpSpec {
  std::vector<Index> layer_widths;
  std::vector<Activation> activations;
  std::uint64_t init_seed = 0;

  // Hidden layers all using `hidden_activation`.
  static MlpSpec make(Index input, const std::vector<Index>& hidden, Index output,
                      Activation hidden_activation, std::uint64_t seed);

  Index input_width() const { return layer_widths.front(); }
  Index output_width() const { return layer_widths.back(); }
  std::size_t layer_count() const { return layer_widths.size() - 1; }

  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

// Row-batch convention: layer l maps h (n x in) to h W_l + b_l with
// W_l in x out and b_l 1 x out.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  std::vector<Matrix*> refs();
  std::size_t scalar_count() const;
};

// Glorot-uniform weights, zero biases, seeded from spec.init_seed.
MlpParams init_mlp(const MlpSpec& spec);
MlpParams zero_mlp(const MlpSpec& spec);

struct MlpVars {
  std::vector<graph::Var> weights;
  std::vector<graph::Var> biases;
};

// Wraps parameters as graph leaves: trainable parameters or constants.
MlpVars bind(const MlpParams& params, bool trainable);

// Reassembles MlpVars from a flat leaf list laid out as MlpParams::refs().
MlpVars vars_from(const std::vector<graph::Var>& leaves, std::size_t offset, std::size_t layers);

graph::Var mlp_forward(const MlpSpec& spec, const MlpVars& vars, const graph::Var& x);

// J(z) u per row, propagated layer by layer as t <- (t W) * act'(a).
graph::Var mlp_jvp(const MlpSpec& spec, const MlpVars& vars, const graph::Var& z,
                   const graph::Var& u);

// u^T J(x) per row, propagated backwards as c <- (c * act'(a)) W^T.
graph::Var mlp_vjp(const MlpSpec& spec, const MlpVars& vars, const graph::Var& x,
                   const graph::Var& u);

// Value-only conveniences.
Matrix mlp_forward(const MlpSpec& spec, const MlpParams& params, const Matrix& x);
Matrix mlp_jvp(const MlpSpec& spec, const MlpParams& params, const Matrix& z, const Matrix& u);
Matrix mlp_vjp(const MlpSpec& spec, const MlpParams& params, const Matrix& x, const Matrix& u);

// Full Jacobian (out x in) at a single input row, assembled column-wise from
// JVPs with basis tangents.
Matrix mlp_jacobian(const MlpSpec& spec, const MlpParams& params, const RowVector& x);

}  // namespace isoflow
