#pragma once

#include <cstdint>
#include <vector>

#include "isoflow/embed.hpp"
#include "isoflow/mlp.hpp"
#include "isoflow/train.hpp"

namespace isoflow::flow {

// Affine coupling: the active coordinates are scaled by exp(s) and shifted by
// t, where s and t are functions of the passive coordinates and the raw
// log-scale is soft-clamped to s = c * tanh(s_raw / c).
struct CouplingLayer {
  Index dim = 0;
  std::vector<bool> mask;  // true = active (transformed)
  MlpSpec net_spec;        // passive -> active
  MlpParams scale_net;
  MlpParams shift_net;
  double scale_clamp = 3.0;

  std::vector<Index> active() const;
  std::vector<Index> passive() const;
  void validate() const;
};

struct CouplingFlow {
  Index dim = 0;
  std::vector<CouplingLayer> layers;

  void validate() const;
  // Per layer: scale net then shift net, each in MlpParams::refs() order.
  std::vector<Matrix*> parameter_refs();
};

struct FlowArchitecture {
  Index dim = 2;
  int layers = 8;
  std::vector<Index> hidden{64, 64};
  Activation activation = Activation::tanh;
  double scale_clamp = 3.0;
  std::uint64_t seed = 0;
};

// Layer k transforms the coordinates with index parity k % 2. In one
// dimension every coordinate is active and the conditioners see a constant
// input, so each layer is an elementwise affine map. The last layer of every
// conditioner starts at zero, making a fresh flow the identity.
CouplingFlow make_flow(const FlowArchitecture& arch);

struct FlowResult {
  Matrix values;  // n x d
  Vector logdet;  // log |det J| per row
};

// Graph views of a flow's parameters for training.
struct FlowVars {
  std::vector<MlpVars> scale;
  std::vector<MlpVars> shift;
};

FlowVars bind(const CouplingFlow& flow, bool trainable);
FlowVars flow_vars_from(const CouplingFlow& flow, const std::vector<graph::Var>& leaves);

struct GraphResult {
  graph::Var values;
  graph::Var logdet;  // n x 1
};

GraphResult forward(const CouplingFlow& flow, const FlowVars& vars, const graph::Var& z);
GraphResult inverse(const CouplingFlow& flow, const FlowVars& vars, const graph::Var& x);

// T(z) and log|det J_T(z)|.
FlowResult flow_forward(const CouplingFlow& flow, const Matrix& z);
// T^{-1}(x) and log|det J_{T^{-1}}(x)|.
FlowResult flow_inverse(const CouplingFlow& flow, const Matrix& x);

// Standard normal log-density per row.
Vector standard_normal_log_density(const Matrix& z);

// log phi(T^{-1}(x)) + log|det J_{T^{-1}}(x)|.
Vector log_prob_latent(const CouplingFlow& flow, const Matrix& x);

// Mean negative log-likelihood, differentiable with respect to `vars`.
graph::Var nll_loss(const CouplingFlow& flow, const FlowVars& vars, const Matrix& batch);
graph::Var nll_loss(const CouplingFlow& flow, const Matrix& batch);

train::Objective nll_objective(const CouplingFlow& flow);

struct FlowFit {
  CouplingFlow flow;
  train::FitResult result;
};

FlowFit flow_fit(const Matrix& train, const Matrix& validation, const FlowArchitecture& arch,
                 const train::TrainConfig& config);

// ---- composition with an embedding ----------------------------------------

struct InjectiveFlowModel {
  embed::Embedding embedding;
  CouplingFlow flow;

  void validate() const;
};

// Draws z ~ N(0, I_d) from `seed` and decodes T(z).
Matrix sample_latent(const CouplingFlow& flow, Index n, std::uint64_t seed);
Matrix sample(const InjectiveFlowModel& model, Index n, std::uint64_t seed);

// Density of the composition assuming an isometric embedding: the latent
// density of encode(x). Exact only when the decoder is isometric and x lies
// on the decoded manifold.
Vector log_prob_ambient(const InjectiveFlowModel& model, const Matrix& x);

}  // namespace isoflow::flow
