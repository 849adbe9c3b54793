#include "isoflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <Eigen/LU>

namespace isoflow::eval {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"metric", metric}, {"value", value}, {"count", count}, {"seed", seed}};
  if (!per_sample.empty()) j["per_sample"] = per_sample;
  return j;
}

namespace {

double gram_determinant(const Matrix& jacobian) {
  const Matrix gram = jacobian.transpose() * jacobian;
  const double det = std::abs(Eigen::PartialPivLU<Matrix>(gram).determinant());
  require(std::isfinite(det) && det > 1e-300, ErrorCode::singular,
          "gram determinant " + std::to_string(det) + ": decoder Jacobian is rank deficient");
  return det;
}

}  // namespace

double log_gram_determinant(const Matrix& jacobian) {
  return std::log(gram_determinant(jacobian));
}

std::vector<double> isometry_factors(const embed::Embedding& embedding, const Matrix& test) {
  require(test.rows() > 0, ErrorCode::invalid_argument, "isometry_deviation: empty test set");
  require(test.cols() == embed::ambient_dim(embedding), ErrorCode::shape_mismatch,
          "isometry_deviation: test width " + std::to_string(test.cols()) + ", expected " +
              std::to_string(embed::ambient_dim(embedding)));
  const Matrix z = embed::encode(embedding, test);
  std::vector<double> out(static_cast<std::size_t>(test.rows()));
  for (Index i = 0; i < test.rows(); ++i) {
    const Matrix j = embed::decoder_jacobian(embedding, z.row(i));
    out[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(gram_determinant(j));
  }
  return out;
}

double isometry_deviation(const embed::Embedding& embedding, const Matrix& test) {
  const auto f = isometry_factors(embedding, test);
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

Vector gram_corrected_log_prob(const flow::InjectiveFlowModel& model, const Matrix& x) {
  model.validate();
  require(x.allFinite(), ErrorCode::non_finite, "gram_corrected_log_prob: non-finite input");
  require(x.cols() == embed::ambient_dim(model.embedding), ErrorCode::shape_mismatch,
          "gram_corrected_log_prob: input width " + std::to_string(x.cols()) + ", expected " +
              std::to_string(embed::ambient_dim(model.embedding)));
  const Matrix latent = embed::encode(model.embedding, x);
  Vector out = flow::log_prob_latent(model.flow, latent);
  for (Index i = 0; i < x.rows(); ++i) {
    const Matrix j = embed::decoder_jacobian(model.embedding, latent.row(i));
    out(i) -= 0.5 * log_gram_determinant(j);
  }
  return out;
}

double surface_residual(const Matrix& samples) {
  require(samples.cols() == 3, ErrorCode::shape_mismatch,
          "surface_residual: samples must be 3-D, got width " + std::to_string(samples.cols()));
  require(samples.rows() > 0, ErrorCode::invalid_argument, "surface_residual: no samples");
  return (samples.rowwise().squaredNorm().array() - 1.0).abs().mean();
}

ReconstructionErrors reconstruction_errors(const embed::Embedding& embedding, const Matrix& test) {
  require(test.rows() > 0, ErrorCode::invalid_argument, "reconstruction_errors: empty test set");
  require(test.cols() == embed::ambient_dim(embedding), ErrorCode::shape_mismatch,
          "reconstruction_errors: test width differs from the embedding");
  const Matrix residual = test - embed::decode(embedding, embed::encode(embedding, test));
  ReconstructionErrors e;
  e.mse = residual.array().square().mean();
  e.mae = residual.array().abs().mean();
  e.mean_norm = residual.rowwise().norm().mean();
  return e;
}

std::vector<ParetoPoint> pareto_sweep(const Matrix& train, const Matrix& validation,
                                      const std::vector<double>& lambda_grid,
                                      const ParetoConfig& config,
                                      const std::function<void(const ParetoPoint&)>& on_point) {
  require(!lambda_grid.empty(), ErrorCode::invalid_argument, "pareto_sweep: empty lambda grid");
  std::vector<ParetoPoint> points;
  for (const double lambda : lambda_grid) {
    try {
      embed::IaeFitConfig cfg = config.iae;
      cfg.lambda = lambda;
      const embed::IaeFit fit = embed::iae_fit(train, validation, cfg);
      const auto& records = fit.result.history.records;
      const auto& reported = fit.result.stopped_early
                             ? records[static_cast<std::size_t>(fit.result.best_epoch)]
                             : records.back();

      ParetoPoint p;
      p.lambda = lambda;
      p.l_total = reported.validation[0];
      p.l_ae = reported.validation[1];
      p.l_iso = reported.validation[2];
      p.l_piso = reported.validation[3];
      const embed::Embedding emb = fit.model;
      p.ae_norm = reconstruction_errors(emb, validation).mean_norm;

      if (train.cols() == 3) {
        const flow::FlowFit ff =
            flow::flow_fit(embed::encode(emb, train), embed::encode(emb, validation), config.flow,
                           config.flow_train);
        const flow::InjectiveFlowModel model{emb, ff.flow};
        p.surface_residual = surface_residual(flow::sample(model, config.samples, config.sample_seed));
      }
      if (on_point) on_point(p);
      points.push_back(p);
    } catch (const Error& e) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "lambda %g: ", lambda);
      fail(e.code(), buf + std::string(e.what()));
    }
  }
  return points;
}

void write_pareto_csv(const std::string& path, const std::vector<ParetoPoint>& points) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path);
  out << "lambda,l_total,l_ae,l_iso,l_piso,ae_norm,surface_residual\n";
  char buf[512];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", p.lambda, p.l_total,
                  p.l_ae, p.l_iso, p.l_piso, p.ae_norm);
    out << buf;
    if (p.surface_residual) {
      std::snprintf(buf, sizeof buf, "%.17g", *p.surface_residual);
      out << buf;
    }
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path);
}

bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.l_ae <= b.l_ae && a.l_iso <= b.l_iso && (a.l_ae < b.l_ae || a.l_iso < b.l_iso);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_argument,
          "spearman: need two equal-length series of at least two values");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorCode::invalid_argument, "spearman: constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace isoflow::eval
