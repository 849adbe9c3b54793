#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "isoflow/mlp.hpp"
#include "isoflow/train.hpp"

namespace isoflow::embed {

// ---- PCA ------------------------------------------------------------------

struct PcaEmbedding {
  RowVector mean;          // 1 x D
  Matrix basis;            // D x d, orthonormal columns
  Vector singular_values;  // all D values, non-increasing
  Index latent_dim = 0;

  Index ambient_dim() const { return mean.size(); }
};

// Either a fixed latent dimension or the smallest one reaching a cumulative
// explained variance target (percent).
struct PcaTarget {
  std::optional<Index> latent_dim;
  std::optional<double> cev_percent;

  static PcaTarget dim(Index d) { return {d, std::nullopt}; }
  static PcaTarget cev(double percent) { return {std::nullopt, percent}; }
};

PcaEmbedding pca_fit(const Matrix& data, const PcaTarget& target);

// Cumulative explained variance, in percent, of the leading d values.
double cumulative_explained_variance(const Vector& singular_values, Index d);

Matrix pca_encode(const PcaEmbedding& e, const Matrix& x);
Matrix pca_decode(const PcaEmbedding& e, const Matrix& z);

// ---- I-AE -----------------------------------------------------------------

// Reconstruction term of the I-AE loss: the per-element mean squared error,
// or the mean Euclidean norm of the per-sample residual.
enum class ReconstructionLoss : std::uint8_t { mean_squared, norm };

const char* to_string(ReconstructionLoss r);
ReconstructionLoss reconstruction_from_string(const std::string& name);

struct IaeModel {
  MlpSpec encoder_spec;  // D -> d
  MlpParams encoder;
  MlpSpec decoder_spec;  // d -> D
  MlpParams decoder;
  double lambda_iso = 1.0;
  double lambda_piso = 1.0;
  ReconstructionLoss reconstruction = ReconstructionLoss::mean_squared;

  Index latent_dim() const { return encoder_spec.output_width(); }
  Index ambient_dim() const { return encoder_spec.input_width(); }

  void validate() const;
  // Encoder parameters first, then decoder; the layout fit() trains.
  std::vector<Matrix*> parameter_refs();
};

struct IaeArchitecture {
  Index ambient_dim = 0;
  Index latent_dim = 0;
  std::vector<Index> hidden{128, 128, 128};
  Activation activation = Activation::tanh;
  std::uint64_t seed = 0;
};

IaeModel make_iae(const IaeArchitecture& arch, double lambda);

// Uniform directions on the unit sphere S^{d-1}: normalized standard Gaussians.
class UnitSampler {
 public:
  UnitSampler(std::uint64_t seed, Index dim);

  // n x d matrix of unit rows.
  Matrix draw(Index n);
  Index dim() const { return dim_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Index dim_;
};

struct IaeLoss {
  graph::Var total;
  graph::Var l_ae;
  graph::Var l_iso;
  graph::Var l_piso;
};

// Loss on a batch given graph views of the encoder/decoder parameters.
// l_ae  = mean (x - F(G(x)))^2 over elements, or mean ||x - F(G(x))||
// l_iso = mean (||J_F(z) u|| - 1)^2 at z = G(x) (z held fixed)
// l_piso= mean (||u^T J_G(x)|| - 1)^2
IaeLoss iae_loss(const IaeModel& model, const MlpVars& encoder, const MlpVars& decoder,
                 const Matrix& batch, UnitSampler& sampler);
// Convenience form evaluating the stored parameters as trainable leaves.
IaeLoss iae_loss(const IaeModel& model, const Matrix& batch, UnitSampler& sampler);

train::Objective iae_objective(const IaeModel& model);

struct IaeFitConfig {
  IaeArchitecture architecture;
  double lambda = 1.0;  // lambda_iso = lambda_piso
  ReconstructionLoss reconstruction = ReconstructionLoss::mean_squared;
  train::TrainConfig train;
};

struct IaeFit {
  IaeModel model;
  train::FitResult result;
};

IaeFit iae_fit(const Matrix& train, const Matrix& validation, const IaeFitConfig& config);

Matrix iae_encode(const IaeModel& m, const Matrix& x);
Matrix iae_decode(const IaeModel& m, const Matrix& z);

// ---- shared contract ------------------------------------------------------

using Embedding = std::variant<PcaEmbedding, IaeModel>;

Index latent_dim(const Embedding& e);
Index ambient_dim(const Embedding& e);
Matrix encode(const Embedding& e, const Matrix& x);
Matrix decode(const Embedding& e, const Matrix& z);
// Decoder Jacobian (D x d) at one latent point.
Matrix decoder_jacobian(const Embedding& e, const RowVector& z);
const char* method_name(const Embedding& e);

}  // namespace isoflow::embed
