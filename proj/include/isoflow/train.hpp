#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "isoflow/graph.hpp"

namespace isoflow::train {

struct TrainConfig {
  int epochs = 500;
  Index batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::optional<int> patience = 50;
  int checkpoint_interval = 0;  // epochs; 0 disables the callback

  void validate() const;
};

// Bias-corrected Adam over a fixed list of parameter matrices.
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  explicit Adam(const TrainConfig& c) : Adam(c.learning_rate, c.beta1, c.beta2, c.epsilon) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Result of evaluating an objective on one batch. `components` are plain
// values reported in the history; the first entry is the total.
struct LossTerms {
  graph::Var total;
  std::vector<double> components;
};

// `evaluate` builds the loss from graph leaves laid out like the parameter
// list handed to fit(). `seed` is derived per batch so stochastic terms are
// reproducible.
struct Objective {
  std::vector<std::string> component_names;
  std::function<LossTerms(const std::vector<graph::Var>& params, const Matrix& batch,
                          std::uint64_t seed)>
      evaluate;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<double> train;
  std::vector<double> validation;
  double seconds = 0.0;
};

struct LossHistory {
  std::vector<std::string> component_names;
  std::vector<EpochRecord> records;

  // Columns: epoch, <names>, val_<names>, seconds.
  void write_csv(const std::filesystem::path& path, bool include_seconds = true) const;
};

struct FitResult {
  LossHistory history;
  int best_epoch = 0;
  bool stopped_early = false;
};

// Loss components averaged over `data` in fixed-size chunks, without
// touching the parameters.
std::vector<double> evaluate(const std::vector<Matrix*>& params, const Objective& objective,
                             const Matrix& data, Index chunk, std::uint64_t seed);

// Minibatch Adam. Epoch 0 records the initial losses. When validation data is
// given, the best-validation parameters are kept and restored if early
// stopping triggers. A non-finite loss aborts with ErrorCode::divergence.
FitResult fit(const std::vector<Matrix*>& params, const Objective& objective, const Matrix& train,
              const Matrix& validation, const TrainConfig& config,
              const std::function<void(int epoch)>& on_checkpoint = {});

}  // namespace isoflow::train
