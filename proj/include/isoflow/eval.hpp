#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "isoflow/embed.hpp"
#include "isoflow/flow.hpp"

namespace isoflow::eval {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  Index count = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_sample;

  nlohmann::json to_json() const;
};

// log |det(J^T J)| of a D x d Jacobian, by LU with partial pivoting.
// Throws ErrorCode::singular when |det| <= 1e-300.
double log_gram_determinant(const Matrix& jacobian);

// Mean over x of |det(J_F(G(x))^T J_F(G(x)))|^{-1/2}; 1 for an exact isometry.
double isometry_deviation(const embed::Embedding& embedding, const Matrix& test);
std::vector<double> isometry_factors(const embed::Embedding& embedding, const Matrix& test);

// Latent log-density at encode(x) corrected by -1/2 log|det(J_f^T J_f)|
// evaluated at encode(x) = T(z). Slow verification path.
Vector gram_corrected_log_prob(const flow::InjectiveFlowModel& model, const Matrix& x);

// Mean of |-1 + |x|^2| over 3-D samples.
double surface_residual(const Matrix& samples);

struct ReconstructionErrors {
  double mse = 0.0;        // mean squared error per element
  double mae = 0.0;        // mean absolute error per element
  double mean_norm = 0.0;  // mean Euclidean norm of the per-sample residual
};

ReconstructionErrors reconstruction_errors(const embed::Embedding& embedding, const Matrix& test);

struct ParetoConfig {
  embed::IaeFitConfig iae;
  // Composition used for the surface residual (3-D data only).
  flow::FlowArchitecture flow;
  train::TrainConfig flow_train;
  Index samples = 1000;
  std::uint64_t sample_seed = 1;
};

struct ParetoPoint {
  double lambda = 0.0;
  double l_total = 0.0;
  double l_ae = 0.0;
  double l_iso = 0.0;
  double l_piso = 0.0;
  double ae_norm = 0.0;  // mean residual norm on validation data
  std::optional<double> surface_residual;
};

// Trains one I-AE per lambda with the shared seed and evaluates validation
// losses. For D = 3 a flow is fitted on the encoded training data and the
// surface residual of `samples` generated points is reported.
std::vector<ParetoPoint> pareto_sweep(const Matrix& train, const Matrix& validation,
                                      const std::vector<double>& lambda_grid,
                                      const ParetoConfig& config,
                                      const std::function<void(const ParetoPoint&)>& on_point = {});

void write_pareto_csv(const std::string& path, const std::vector<ParetoPoint>& points);

// True when `a` is at least as good as `b` in both objectives and strictly
// better in one.
bool dominates(const ParetoPoint& a, const ParetoPoint& b);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace isoflow::eval
