#include "isoflow/flow.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "isoflow/seed.hpp"

namespace isoflow::flow {

using graph::Var;

std::vector<Index> CouplingLayer::active() const {
  std::vector<Index> out;
  for (Index i = 0; i < dim; ++i) {
    if (mask[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

std::vector<Index> CouplingLayer::passive() const {
  std::vector<Index> out;
  for (Index i = 0; i < dim; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

void CouplingLayer::validate() const {
  require(dim >= 1 && mask.size() == static_cast<std::size_t>(dim), ErrorCode::shape_mismatch,
          "coupling layer: mask length differs from dimension");
  const auto n_active = static_cast<Index>(active().size());
  require(n_active >= 1, ErrorCode::invalid_argument, "coupling layer: no active coordinate");
  require(dim == 1 || n_active < dim, ErrorCode::invalid_argument,
          "coupling layer: no passive coordinate");
  require(scale_clamp > 0.0, ErrorCode::invalid_argument, "coupling layer: clamp must be positive");
  net_spec.validate();
  const Index in = dim == 1 ? 1 : dim - n_active;
  require(net_spec.input_width() == in && net_spec.output_width() == n_active,
          ErrorCode::shape_mismatch, "coupling layer: conditioner widths do not match the mask");
  require(scale_net.weights.size() == net_spec.layer_count() &&
              shift_net.weights.size() == net_spec.layer_count(),
          ErrorCode::shape_mismatch, "coupling layer: parameters do not match the conditioner");
}

void CouplingFlow::validate() const {
  require(dim >= 1, ErrorCode::invalid_argument, "flow: dimension must be positive");
  for (const auto& layer : layers) {
    require(layer.dim == dim, ErrorCode::shape_mismatch, "flow: layers disagree on dimension");
    layer.validate();
  }
}

std::vector<Matrix*> CouplingFlow::parameter_refs() {
  std::vector<Matrix*> refs;
  for (auto& layer : layers) {
    for (Matrix* p : layer.scale_net.refs()) refs.push_back(p);
    for (Matrix* p : layer.shift_net.refs()) refs.push_back(p);
  }
  return refs;
}

CouplingFlow make_flow(const FlowArchitecture& arch) {
  require(arch.dim >= 1, ErrorCode::invalid_argument, "flow: dimension must be positive");
  require(arch.layers >= 0, ErrorCode::invalid_argument, "flow: layer count must be non-negative");
  CouplingFlow flow;
  flow.dim = arch.dim;
  for (int k = 0; k < arch.layers; ++k) {
    CouplingLayer layer;
    layer.dim = arch.dim;
    layer.scale_clamp = arch.scale_clamp;
    layer.mask.resize(static_cast<std::size_t>(arch.dim));
    for (Index i = 0; i < arch.dim; ++i) {
      layer.mask[static_cast<std::size_t>(i)] = arch.dim == 1 || (i % 2) == (k % 2);
    }
    const auto n_active = static_cast<Index>(layer.active().size());
    const Index in = arch.dim == 1 ? 1 : arch.dim - n_active;
    const auto seed = mix_seed(arch.seed, static_cast<std::uint64_t>(k));
    layer.net_spec = MlpSpec::make(in, arch.hidden, n_active, arch.activation, seed);
    layer.scale_net = init_mlp(layer.net_spec);
    MlpSpec shift_spec = layer.net_spec;
    shift_spec.init_seed = mix_seed(seed, 1);
    layer.shift_net = init_mlp(shift_spec);
    layer.scale_net.weights.back().setZero();
    layer.shift_net.weights.back().setZero();
    flow.layers.push_back(std::move(layer));
  }
  return flow;
}

FlowVars bind(const CouplingFlow& flow, bool trainable) {
  FlowVars vars;
  for (const auto& layer : flow.layers) {
    vars.scale.push_back(isoflow::bind(layer.scale_net, trainable));
    vars.shift.push_back(isoflow::bind(layer.shift_net, trainable));
  }
  return vars;
}

FlowVars flow_vars_from(const CouplingFlow& flow, const std::vector<Var>& leaves) {
  FlowVars vars;
  std::size_t offset = 0;
  for (const auto& layer : flow.layers) {
    const std::size_t n = layer.net_spec.layer_count();
    vars.scale.push_back(vars_from(leaves, offset, n));
    offset += 2 * n;
    vars.shift.push_back(vars_from(leaves, offset, n));
    offset += 2 * n;
  }
  require(offset == leaves.size(), ErrorCode::shape_mismatch,
          "flow: leaf count does not match the flow's parameters");
  return vars;
}

namespace {

struct LayerPieces {
  Var active;
  Var passive;
  Var log_scale;  // clamped, n x |active|
  Var shift;
};

LayerPieces condition(const CouplingLayer& layer, const MlpVars& scale, const MlpVars& shift,
                      const Var& input) {
  LayerPieces p;
  p.active = graph::slice(input, layer.active());
  const Var cond = layer.dim == 1 ? Var::constant(Matrix::Ones(input.rows(), 1))
                                  : graph::slice(input, layer.passive());
  p.passive = layer.dim == 1 ? Var() : cond;
  const double c = layer.scale_clamp;
  const Var raw = mlp_forward(layer.net_spec, scale, cond);
  p.log_scale = c * graph::tanh((1.0 / c) * raw);
  p.shift = mlp_forward(layer.net_spec, shift, cond);
  return p;
}

// Places the transformed active block back among the passive coordinates.
Var reassemble(const CouplingLayer& layer, const Var& active, const Var& passive) {
  if (layer.dim == 1) return active;
  const auto act = layer.active();
  const auto pas = layer.passive();
  std::vector<Index> position(static_cast<std::size_t>(layer.dim));
  for (std::size_t k = 0; k < act.size(); ++k) position[static_cast<std::size_t>(act[k])] = static_cast<Index>(k);
  for (std::size_t k = 0; k < pas.size(); ++k) {
    position[static_cast<std::size_t>(pas[k])] = static_cast<Index>(act.size() + k);
  }
  return graph::slice(graph::concat(active, passive), std::move(position));
}

void check_input(const CouplingFlow& flow, const Matrix& m, const char* what) {
  require(m.cols() == flow.dim, ErrorCode::shape_mismatch,
          std::string(what) + ": input width " + std::to_string(m.cols()) + ", flow dimension " +
              std::to_string(flow.dim));
  require(m.allFinite(), ErrorCode::non_finite, std::string(what) + ": non-finite input");
}

}  // namespace

GraphResult forward(const CouplingFlow& flow, const FlowVars& vars, const Var& z) {
  Var h = z;
  Var logdet = Var::constant(Matrix::Zero(z.rows(), 1));
  for (std::size_t k = 0; k < flow.layers.size(); ++k) {
    const auto& layer = flow.layers[k];
    const LayerPieces p = condition(layer, vars.scale[k], vars.shift[k], h);
    const Var y_active = graph::mul(p.active, graph::exp(p.log_scale)) + p.shift;
    h = reassemble(layer, y_active, p.passive);
    logdet = logdet + graph::row_sum(p.log_scale);
  }
  return {h, logdet};
}

GraphResult inverse(const CouplingFlow& flow, const FlowVars& vars, const Var& x) {
  Var h = x;
  Var logdet = Var::constant(Matrix::Zero(x.rows(), 1));
  for (std::size_t k = flow.layers.size(); k-- > 0;) {
    const auto& layer = flow.layers[k];
    const LayerPieces p = condition(layer, vars.scale[k], vars.shift[k], h);
    const Var z_active = graph::mul(p.active - p.shift, graph::exp(-p.log_scale));
    h = reassemble(layer, z_active, p.passive);
    logdet = logdet - graph::row_sum(p.log_scale);
  }
  return {h, logdet};
}

FlowResult flow_forward(const CouplingFlow& flow, const Matrix& z) {
  check_input(flow, z, "flow_forward");
  const GraphResult r = forward(flow, bind(flow, false), Var::constant(z));
  return {r.values.value(), r.logdet.value().col(0)};
}

FlowResult flow_inverse(const CouplingFlow& flow, const Matrix& x) {
  check_input(flow, x, "flow_inverse");
  const GraphResult r = inverse(flow, bind(flow, false), Var::constant(x));
  return {r.values.value(), r.logdet.value().col(0)};
}

Vector standard_normal_log_density(const Matrix& z) {
  const double norm = 0.5 * static_cast<double>(z.cols()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z.rowwise().squaredNorm()).array() - norm;
}

Vector log_prob_latent(const CouplingFlow& flow, const Matrix& x) {
  const FlowResult r = flow_inverse(flow, x);
  return standard_normal_log_density(r.values) + r.logdet;
}

Var nll_loss(const CouplingFlow& flow, const FlowVars& vars, const Matrix& batch) {
  require(batch.rows() > 0, ErrorCode::invalid_argument, "nll_loss: empty batch");
  require(batch.cols() == flow.dim, ErrorCode::shape_mismatch,
          "nll_loss: batch width differs from the flow dimension");
  const GraphResult r = inverse(flow, vars, Var::constant(batch));
  const double norm = 0.5 * static_cast<double>(flow.dim) * std::log(2.0 * std::numbers::pi);
  // -log p = |z|^2 / 2 + norm - logdet_inverse
  const Var per_row = 0.5 * graph::row_sum(graph::square(r.values)) - r.logdet;
  return graph::mean(per_row) + norm;
}

Var nll_loss(const CouplingFlow& flow, const Matrix& batch) {
  return nll_loss(flow, bind(flow, true), batch);
}

train::Objective nll_objective(const CouplingFlow& flow) {
  train::Objective obj;
  obj.component_names = {"nll"};
  obj.evaluate = [&flow](const std::vector<Var>& leaves, const Matrix& batch, std::uint64_t) {
    train::LossTerms terms;
    terms.total = nll_loss(flow, flow_vars_from(flow, leaves), batch);
    terms.components = {terms.total.value()(0, 0)};
    return terms;
  };
  return obj;
}

FlowFit flow_fit(const Matrix& train, const Matrix& validation, const FlowArchitecture& arch,
                 const train::TrainConfig& config) {
  FlowArchitecture a = arch;
  a.dim = train.cols();
  FlowFit out{make_flow(a), {}};
  const auto objective = nll_objective(out.flow);
  out.result = train::fit(out.flow.parameter_refs(), objective, train, validation, config);
  return out;
}

void InjectiveFlowModel::validate() const {
  flow.validate();
  require(flow.dim == embed::latent_dim(embedding), ErrorCode::shape_mismatch,
          "model: flow dimension " + std::to_string(flow.dim) +
              " differs from the embedding's latent dimension " +
              std::to_string(embed::latent_dim(embedding)));
}

Matrix sample_latent(const CouplingFlow& flow, Index n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "sample: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(n, flow.dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < flow.dim; ++j) z(i, j) = normal(rng);
  }
  return flow_forward(flow, z).values;
}

Matrix sample(const InjectiveFlowModel& model, Index n, std::uint64_t seed) {
  model.validate();
  return embed::decode(model.embedding, sample_latent(model.flow, n, seed));
}

Vector log_prob_ambient(const InjectiveFlowModel& model, const Matrix& x) {
  model.validate();
  require(x.allFinite(), ErrorCode::non_finite, "log_prob_ambient: non-finite input");
  return log_prob_latent(model.flow, embed::encode(model.embedding, x));
}

}  // namespace isoflow::flow
