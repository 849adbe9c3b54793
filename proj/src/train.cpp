#include "isoflow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "isoflow/seed.hpp"

namespace isoflow::train {

using graph::Var;

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorCode::invalid_argument, "epochs must be non-negative");
  require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be at least 1");
  require(learning_rate >= 0.0, ErrorCode::invalid_argument, "learning_rate must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          ErrorCode::invalid_argument, "adam betas must lie in [0, 1)");
  require(epsilon > 0.0, ErrorCode::invalid_argument, "adam epsilon must be positive");
  require(!patience || *patience >= 1, ErrorCode::invalid_argument, "patience must be positive");
  require(checkpoint_interval >= 0, ErrorCode::invalid_argument,
          "checkpoint_interval must be non-negative");
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  require(params.size() == grads.size(), ErrorCode::shape_mismatch,
          "adam: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  require(m_.size() == params.size(), ErrorCode::shape_mismatch,
          "adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grads[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grads[k].cwiseAbs2();
    const auto m_hat = m_[k].array() / c1;
    const auto v_hat = v_[k].array() / c2;
    params[k]->array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

void LossHistory::write_csv(const std::filesystem::path& path, bool include_seconds) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << "epoch";
  for (const auto& n : component_names) out << ',' << n;
  for (const auto& n : component_names) out << ",val_" << n;
  if (include_seconds) out << ",seconds";
  out << '\n';
  char buf[32];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const auto& r : records) {
    out << r.epoch;
    for (double v : r.train) put(v);
    for (std::size_t k = 0; k < component_names.size(); ++k) {
      if (k < r.validation.size()) {
        put(r.validation[k]);
      } else {
        out << ',';
      }
    }
    if (include_seconds) put(r.seconds);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

namespace {

std::vector<Var> leaves(const std::vector<Matrix*>& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Matrix* p : params) {
    out.push_back(trainable ? Var::parameter(*p) : Var::constant(*p));
  }
  return out;
}

bool all_finite(const std::vector<double>& values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Matrix gather_rows(const Matrix& data, const std::vector<Index>& order, std::size_t begin,
                   std::size_t end) {
  Matrix batch(static_cast<Index>(end - begin), data.cols());
  for (std::size_t k = begin; k < end; ++k) batch.row(static_cast<Index>(k - begin)) = data.row(order[k]);
  return batch;
}

}  // namespace

std::vector<double> evaluate(const std::vector<Matrix*>& params, const Objective& objective,
                             const Matrix& data, Index chunk, std::uint64_t seed) {
  require(data.rows() > 0, ErrorCode::invalid_argument, "evaluate: empty data");
  const auto frozen = leaves(params, false);
  std::vector<double> totals(objective.component_names.size(), 0.0);
  std::uint64_t k = 0;
  for (Index begin = 0; begin < data.rows(); begin += chunk, ++k) {
    const Index rows = std::min(chunk, data.rows() - begin);
    const LossTerms terms = objective.evaluate(frozen, data.middleRows(begin, rows), mix_seed(seed, k));
    for (std::size_t c = 0; c < totals.size(); ++c) {
      totals[c] += terms.components[c] * static_cast<double>(rows);
    }
  }
  for (double& t : totals) t /= static_cast<double>(data.rows());
  return totals;
}

FitResult fit(const std::vector<Matrix*>& params, const Objective& objective, const Matrix& train,
              const Matrix& validation, const TrainConfig& config,
              const std::function<void(int)>& on_checkpoint) {
  config.validate();
  require(train.rows() > 0, ErrorCode::invalid_argument, "fit: empty training set");

  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started).count(); };

  const bool has_validation = validation.rows() > 0;
  const std::uint64_t val_seed = mix_seed(config.seed, 0xa11da7e);
  const std::uint64_t train_eval_seed = mix_seed(config.seed, 0x7a1e);

  FitResult result;
  result.history.component_names = objective.component_names;

  const auto check = [&](const std::vector<double>& values, int epoch, const char* where) {
    if (!all_finite(values)) {
      fail(ErrorCode::divergence,
           "non-finite loss at epoch " + std::to_string(epoch) + " (" + where + ")");
    }
  };

  {
    EpochRecord r;
    r.epoch = 0;
    r.train = evaluate(params, objective, train, config.batch_size, train_eval_seed);
    check(r.train, 0, "initial training loss");
    if (has_validation) {
      r.validation = evaluate(params, objective, validation, config.batch_size, val_seed);
      check(r.validation, 0, "initial validation loss");
    }
    r.seconds = elapsed();
    result.history.records.push_back(std::move(r));
  }

  std::vector<Matrix> best;
  double best_val = has_validation ? result.history.records.back().validation.at(0) : 0.0;
  if (has_validation) {
    for (const Matrix* p : params) best.push_back(*p);
  }
  int since_best = 0;

  Adam adam(config);
  std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0x5eed));
  std::vector<Index> order(static_cast<std::size_t>(train.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::vector<double> sums(objective.component_names.size(), 0.0);
    std::uint64_t b = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++b) {
      const std::size_t end = std::min(order.size(), begin + batch);
      const Matrix x = gather_rows(train, order, begin, end);
      const auto vars = leaves(params, true);
      const LossTerms terms =
          objective.evaluate(vars, x, mix_seed(config.seed, (static_cast<std::uint64_t>(epoch) << 32) | b));
      if (!all_finite(terms.components)) {
        fail(ErrorCode::divergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(b));
      }
      graph::backward(terms.total);
      std::vector<Matrix> grads;
      grads.reserve(vars.size());
      for (const Var& v : vars) grads.push_back(v.grad());
      adam.step(params, grads);
      for (std::size_t c = 0; c < sums.size(); ++c) {
        sums[c] += terms.components[c] * static_cast<double>(end - begin);
      }
    }

    EpochRecord r;
    r.epoch = epoch;
    for (double s : sums) r.train.push_back(s / static_cast<double>(order.size()));
    if (has_validation) {
      r.validation = evaluate(params, objective, validation, config.batch_size, val_seed);
      check(r.validation, epoch, "validation loss");
    }
    r.seconds = elapsed();
    const double val_total = has_validation ? r.validation[0] : 0.0;
    result.history.records.push_back(std::move(r));

    if (config.checkpoint_interval > 0 && on_checkpoint && epoch % config.checkpoint_interval == 0) {
      on_checkpoint(epoch);
    }

    if (has_validation) {
      if (val_total < best_val) {
        best_val = val_total;
        result.best_epoch = epoch;
        since_best = 0;
        for (std::size_t k = 0; k < params.size(); ++k) best[k] = *params[k];
      } else if (config.patience && ++since_best >= *config.patience) {
        for (std::size_t k = 0; k < params.size(); ++k) *params[k] = best[k];
        result.stopped_early = true;
        break;
      }
    }
  }
  if (!result.stopped_early && !has_validation) result.best_epoch = config.epochs;
  return result;
}

}  // namespace isoflow::train
