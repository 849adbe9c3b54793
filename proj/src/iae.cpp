#include "isoflow/embed.hpp"
#include "isoflow/seed.hpp"

namespace isoflow::embed {

using graph::Var;

void IaeModel::validate() const {
  encoder_spec.validate();
  decoder_spec.validate();
  require(encoder_spec.input_width() == decoder_spec.output_width(), ErrorCode::shape_mismatch,
          "i-ae: encoder input and decoder output widths differ");
  require(encoder_spec.output_width() == decoder_spec.input_width(), ErrorCode::shape_mismatch,
          "i-ae: encoder output and decoder input widths differ");
  require(lambda_iso >= 0.0 && lambda_piso >= 0.0, ErrorCode::invalid_argument,
          "i-ae: isometry weights must be non-negative");
  require(encoder.weights.size() == encoder_spec.layer_count() &&
              decoder.weights.size() == decoder_spec.layer_count(),
          ErrorCode::shape_mismatch, "i-ae: parameters do not match the network specs");
}

std::vector<Matrix*> IaeModel::parameter_refs() {
  auto refs = encoder.refs();
  auto dec = decoder.refs();
  refs.insert(refs.end(), dec.begin(), dec.end());
  return refs;
}

IaeModel make_iae(const IaeArchitecture& arch, double lambda) {
  require(arch.ambient_dim >= 1 && arch.latent_dim >= 1, ErrorCode::invalid_argument,
          "i-ae: dimensions must be positive");
  IaeModel m;
  std::vector<Index> reversed(arch.hidden.rbegin(), arch.hidden.rend());
  m.encoder_spec = MlpSpec::make(arch.ambient_dim, arch.hidden, arch.latent_dim, arch.activation,
                                 mix_seed(arch.seed, 1));
  m.decoder_spec = MlpSpec::make(arch.latent_dim, reversed, arch.ambient_dim, arch.activation,
                                 mix_seed(arch.seed, 2));
  m.encoder = init_mlp(m.encoder_spec);
  m.decoder = init_mlp(m.decoder_spec);
  m.lambda_iso = lambda;
  m.lambda_piso = lambda;
  m.validate();
  return m;
}

UnitSampler::UnitSampler(std::uint64_t seed, Index dim) : rng_(seed), dim_(dim) {
  require(dim >= 1, ErrorCode::invalid_argument, "unit sampler: dimension must be positive");
}

Matrix UnitSampler::draw(Index n) {
  Matrix u(n, dim_);
  for (Index i = 0; i < n; ++i) {
    double norm = 0.0;
    // Rejects the (measure-zero) all-zero draw.
    while (norm == 0.0) {
      for (Index j = 0; j < dim_; ++j) u(i, j) = normal_(rng_);
      norm = u.row(i).norm();
    }
    u.row(i) /= norm;
  }
  return u;
}

IaeLoss iae_loss(const IaeModel& model, const MlpVars& encoder, const MlpVars& decoder,
                 const Matrix& batch, UnitSampler& sampler) {
  require(batch.rows() > 0, ErrorCode::invalid_argument, "iae_loss: empty batch");
  require(batch.cols() == model.ambient_dim(), ErrorCode::shape_mismatch,
          "iae_loss: batch width " + std::to_string(batch.cols()) + ", expected " +
              std::to_string(model.ambient_dim()));
  require(sampler.dim() == model.latent_dim(), ErrorCode::shape_mismatch,
          "iae_loss: unit sampler dimension differs from the latent dimension");

  const Var x = Var::constant(batch);
  const Var z = mlp_forward(model.encoder_spec, encoder, x);
  const Var recon = mlp_forward(model.decoder_spec, decoder, z);

  const Var u = Var::constant(sampler.draw(batch.rows()));

  IaeLoss loss;
  loss.l_ae = model.reconstruction == ReconstructionLoss::mean_squared
                  ? graph::mean(graph::square(x - recon))
                  : graph::mean(graph::row_norm(x - recon));
  // The decoder isometry term depends on the decoder parameters only.
  const Var jvp = mlp_jvp(model.decoder_spec, decoder, z.detach(), u);
  loss.l_iso = graph::mean(graph::square(graph::row_norm(jvp) - 1.0));
  const Var vjp = mlp_vjp(model.encoder_spec, encoder, x, u);
  loss.l_piso = graph::mean(graph::square(graph::row_norm(vjp) - 1.0));
  loss.total = loss.l_ae + model.lambda_iso * loss.l_iso + model.lambda_piso * loss.l_piso;
  return loss;
}

IaeLoss iae_loss(const IaeModel& model, const Matrix& batch, UnitSampler& sampler) {
  return iae_loss(model, bind(model.encoder, true), bind(model.decoder, true), batch, sampler);
}

train::Objective iae_objective(const IaeModel& model) {
  train::Objective obj;
  obj.component_names = {"l_total", "l_ae", "l_iso", "l_piso"};
  obj.evaluate = [&model](const std::vector<Var>& leaves, const Matrix& batch, std::uint64_t seed) {
    const std::size_t enc_layers = model.encoder_spec.layer_count();
    const std::size_t dec_layers = model.decoder_spec.layer_count();
    const MlpVars enc = vars_from(leaves, 0, enc_layers);
    const MlpVars dec = vars_from(leaves, 2 * enc_layers, dec_layers);
    UnitSampler sampler(seed, model.latent_dim());
    IaeLoss l = iae_loss(model, enc, dec, batch, sampler);
    train::LossTerms terms;
    terms.components = {l.total.value()(0, 0), l.l_ae.value()(0, 0), l.l_iso.value()(0, 0),
                        l.l_piso.value()(0, 0)};
    terms.total = l.total;
    return terms;
  };
  return obj;
}

IaeFit iae_fit(const Matrix& train, const Matrix& validation, const IaeFitConfig& config) {
  IaeArchitecture arch = config.architecture;
  arch.ambient_dim = train.cols();
  IaeFit out{make_iae(arch, config.lambda), {}};
  out.model.reconstruction = config.reconstruction;
  const auto objective = iae_objective(out.model);
  out.result = train::fit(out.model.parameter_refs(), objective, train, validation, config.train);
  return out;
}

Matrix iae_encode(const IaeModel& m, const Matrix& x) {
  return mlp_forward(m.encoder_spec, m.encoder, x);
}

Matrix iae_decode(const IaeModel& m, const Matrix& z) {
  return mlp_forward(m.decoder_spec, m.decoder, z);
}

// ---- shared contract ------------------------------------------------------

Index latent_dim(const Embedding& e) {
  return std::visit([](const auto& m) -> Index {
    if constexpr (std::is_same_v<std::decay_t<decltype(m)>, PcaEmbedding>) {
      return m.latent_dim;
    } else {
      return m.latent_dim();
    }
  }, e);
}

Index ambient_dim(const Embedding& e) {
  return std::visit([](const auto& m) -> Index { return m.ambient_dim(); }, e);
}

Matrix encode(const Embedding& e, const Matrix& x) {
  if (const auto* pca = std::get_if<PcaEmbedding>(&e)) return pca_encode(*pca, x);
  return iae_encode(std::get<IaeModel>(e), x);
}

Matrix decode(const Embedding& e, const Matrix& z) {
  if (const auto* pca = std::get_if<PcaEmbedding>(&e)) return pca_decode(*pca, z);
  return iae_decode(std::get<IaeModel>(e), z);
}

Matrix decoder_jacobian(const Embedding& e, const RowVector& z) {
  require(z.size() == latent_dim(e), ErrorCode::shape_mismatch,
          "decoder_jacobian: latent width mismatch");
  if (const auto* pca = std::get_if<PcaEmbedding>(&e)) return pca->basis;
  const auto& m = std::get<IaeModel>(e);
  return mlp_jacobian(m.decoder_spec, m.decoder, z);
}

const char* to_string(ReconstructionLoss r) {
  return r == ReconstructionLoss::mean_squared ? "mean_squared" : "norm";
}

ReconstructionLoss reconstruction_from_string(const std::string& name) {
  if (name == "mean_squared") return ReconstructionLoss::mean_squared;
  if (name == "norm") return ReconstructionLoss::norm;
  fail(ErrorCode::invalid_argument, "unknown reconstruction loss '" + name + "'");
}

const char* method_name(const Embedding& e) {
  return std::holds_alternative<PcaEmbedding>(e) ? "pca" : "iae";
}

}  // namespace isoflow::embed
