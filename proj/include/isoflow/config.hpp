#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "isoflow/data.hpp"
#include "isoflow/embed.hpp"
#include "isoflow/eval.hpp"
#include "isoflow/flow.hpp"
#include "isoflow/train.hpp"

namespace isoflow::config {

struct DatasetConfig {
  std::string name = "scurve";  // scurve | sphere | mnist | csv
  Index n = 10000;              // synthetic sets
  std::uint64_t seed = 1;
  std::filesystem::path path;   // csv file or MNIST directory
  std::optional<Index> limit;   // MNIST: first rows of the training part
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 2;
};

struct EmbeddingConfig {
  std::string method = "iae";  // pca | iae
  std::optional<Index> latent_dim;
  std::optional<double> cev;  // PCA only, percent
  std::vector<Index> hidden{128, 128, 128};
  Activation activation = Activation::tanh;
  double lambda = 1.0;
  embed::ReconstructionLoss reconstruction = embed::ReconstructionLoss::mean_squared;
  std::uint64_t seed = 3;
  train::TrainConfig train;
};

struct FlowConfig {
  int layers = 8;
  std::vector<Index> hidden{64, 64};
  Activation activation = Activation::tanh;
  double scale_clamp = 3.0;
  std::uint64_t seed = 5;
  train::TrainConfig train;
};

struct ParetoConfig {
  std::vector<double> grid{0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 100.0};
  Index samples = 1000;
  std::uint64_t sample_seed = 11;
};

struct RunConfig {
  DatasetConfig dataset;
  EmbeddingConfig embedding;
  FlowConfig flow;
  ParetoConfig pareto;
  std::filesystem::path output_dir = ".";
};

// Parses a configuration document. Unknown keys and ill-typed values throw
// ErrorCode::invalid_argument; relative paths are resolved against `base_dir`.
RunConfig parse(const nlohmann::json& doc, const std::filesystem::path& base_dir);
// Reads and parses a file; a missing or unreadable file throws ErrorCode::io.
RunConfig load(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& c);

// Replaces every seed in `c` with one derived from `seed`.
void override_seeds(RunConfig& c, std::uint64_t seed);
// Applies ISOFLOW_SEED when it is set. Returns true if it was.
bool apply_seed_env(RunConfig& c);

// Builds or loads the configured dataset and applies the split.
data::Dataset load_dataset(const DatasetConfig& c);

embed::IaeFitConfig iae_fit_config(const RunConfig& c);
embed::PcaTarget pca_target(const EmbeddingConfig& c);
flow::FlowArchitecture flow_architecture(const FlowConfig& c, Index latent_dim);
eval::ParetoConfig pareto_config(const RunConfig& c);

}  // namespace isoflow::config
