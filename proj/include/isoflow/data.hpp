#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "isoflow/common.hpp"

namespace isoflow::data {

struct Split {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
  // Rows not assigned when the fractions sum to less than one.
  std::vector<Index> unused;
};

// Per-feature affine normalization: stored = (raw - shift) / scale.
struct Normalization {
  RowVector shift;
  RowVector scale;

  Matrix apply(const Matrix& raw) const;
  Matrix invert(const Matrix& normalized) const;
};

struct DatasetMeta {
  std::string name;
  std::uint64_t seed = 0;
  std::optional<Normalization> normalization;
};

struct Dataset {
  Matrix samples;  // n x D
  Split split;
  DatasetMeta meta;
  std::vector<std::uint8_t> labels;  // optional, one per row

  Index size() const { return samples.rows(); }
  Index dim() const { return samples.cols(); }

  Matrix rows(const std::vector<Index>& indices) const;
  Matrix train() const { return rows(split.train); }
  Matrix validation() const { return rows(split.validation); }
  Matrix test() const { return rows(split.test); }
};

// S-curve: t ~ U(-3pi/2, 3pi/2), s ~ U(0, 2), x = (sin t, s, sign(t)(cos t - 1)).
Dataset gen_scurve(Index n, std::uint64_t seed);
RowVector scurve_point(double t, double s);

// Covariance of the planar Gaussian that is projected onto the sphere.
Eigen::Matrix2d sphere_latent_covariance();
// Covariance actually realized by the sampler: V |L| V^T for the symmetric
// eigendecomposition V L V^T of sphere_latent_covariance().
Eigen::Matrix2d sphere_effective_covariance();
// z ~ N(0, Sigma) drawn through the sampler's factor; exposed for checks.
Matrix sphere_latent_samples(Index n, std::uint64_t seed);
// Inverse stereographic projection from the plane onto the unit sphere.
RowVector stereographic(double z1, double z2);
Dataset gen_sphere_gaussian(Index n, std::uint64_t seed);

// Seeded shuffle then partition into train/validation/test.
Split make_split(Index n, const std::array<double, 3>& fractions, std::uint64_t seed);
Dataset split(Dataset dataset, const std::array<double, 3>& fractions, std::uint64_t seed);

// ---- IDX (MNIST) ----------------------------------------------------------

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

struct MnistFiles {
  std::filesystem::path images;
  std::filesystem::path labels;
};

// Standard file names inside `dir` for the training ("train") or test ("t10k") part.
MnistFiles mnist_files(const std::filesystem::path& dir, const std::string& part);

// Loads images (flattened to 784 columns, scaled to [0,1]) and labels.
// `limit` keeps only the first rows when set.
Dataset load_mnist(const MnistFiles& files, std::optional<Index> limit = std::nullopt);

// ---- CSV ------------------------------------------------------------------

// Header x1..xD, one row per sample, 17 significant digits.
void write_csv(const std::filesystem::path& path, const Matrix& samples);
Matrix read_csv(const std::filesystem::path& path);

}  // namespace isoflow::data
