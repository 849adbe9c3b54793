#include "isoflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace isoflow::data {

Matrix Normalization::apply(const Matrix& raw) const {
  return ((raw.rowwise() - shift).array().rowwise() / scale.array()).matrix();
}

Matrix Normalization::invert(const Matrix& normalized) const {
  return (normalized.array().rowwise() * scale.array()).matrix().rowwise() + shift;
}

Matrix Dataset::rows(const std::vector<Index>& indices) const {
  Matrix out(static_cast<Index>(indices.size()), samples.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.row(static_cast<Index>(k)) = samples.row(indices[k]);
  }
  return out;
}

namespace {

Split all_train(Index n) {
  Split s;
  s.train.resize(static_cast<std::size_t>(n));
  std::iota(s.train.begin(), s.train.end(), Index{0});
  return s;
}

}  // namespace

RowVector scurve_point(double t, double s) {
  RowVector x(3);
  const double sign = (t > 0.0) - (t < 0.0);
  x << std::sin(t), s, sign * (std::cos(t) - 1.0);
  return x;
}

Dataset gen_scurve(Index n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "gen_scurve: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.samples.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double t = 3.0 * std::numbers::pi * (unit(rng) - 0.5);
    const double s = 2.0 * unit(rng);
    ds.samples.row(i) = scurve_point(t, s);
  }
  ds.split = all_train(n);
  ds.meta.name = "scurve";
  ds.meta.seed = seed;
  return ds;
}

Eigen::Matrix2d sphere_latent_covariance() {
  Eigen::Matrix2d sigma;
  sigma << 0.548, 0.602,
           0.602, 0.544;
  return sigma;
}

namespace {

// The covariance above is symmetric but indefinite (det < 0), so no Cholesky
// factor exists. The factor uses |eigenvalues|, which is what an SVD-based
// multivariate-normal sampler produces for this matrix.
Eigen::Matrix2d sphere_factor() {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sphere_latent_covariance());
  const Eigen::Vector2d root = eig.eigenvalues().cwiseAbs().cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

Eigen::Matrix2d sphere_effective_covariance() {
  const Eigen::Matrix2d f = sphere_factor();
  return f * f.transpose();
}

Matrix sphere_latent_samples(Index n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "sphere samples: n must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Matrix2d factor = sphere_factor();
  Matrix z(n, 2);
  for (Index i = 0; i < n; ++i) {
    Eigen::Vector2d e;
    e(0) = normal(rng);
    e(1) = normal(rng);
    z.row(i) = (factor * e).transpose();
  }
  return z;
}

RowVector stereographic(double z1, double z2) {
  const double r2 = z1 * z1 + z2 * z2;
  RowVector x(3);
  x << 2.0 * z1, 2.0 * z2, -1.0 + r2;
  return x / (1.0 + r2);
}

Dataset gen_sphere_gaussian(Index n, std::uint64_t seed) {
  const Matrix z = sphere_latent_samples(n, seed);
  Dataset ds;
  ds.samples.resize(n, 3);
  for (Index i = 0; i < n; ++i) ds.samples.row(i) = stereographic(z(i, 0), z(i, 1));
  ds.split = all_train(n);
  ds.meta.name = "sphere";
  ds.meta.seed = seed;
  return ds;
}

Split make_split(Index n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  require(n >= 0, ErrorCode::invalid_argument, "split: negative size");
  double total = 0.0;
  for (double f : fractions) {
    require(f > 0.0, ErrorCode::invalid_argument, "split: fractions must be positive");
    total += f;
  }
  require(total <= 1.0 + 1e-12, ErrorCode::invalid_argument,
          "split: fractions sum to more than one");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto count = [n](double f) {
    return static_cast<Index>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const Index n_val = count(fractions[1]);
  const Index n_test = count(fractions[2]);
  // A full partition hands rounding leftovers to the training split.
  const Index n_train = std::abs(total - 1.0) <= 1e-12 ? n - n_val - n_test : count(fractions[0]);

  Split s;
  auto it = order.begin();
  s.train.assign(it, it + n_train);
  it += n_train;
  s.validation.assign(it, it + n_val);
  it += n_val;
  s.test.assign(it, it + n_test);
  it += n_test;
  s.unused.assign(it, order.end());
  return s;
}

Dataset split(Dataset dataset, const std::array<double, 3>& fractions, std::uint64_t seed) {
  dataset.split = make_split(dataset.size(), fractions, seed);
  return dataset;
}

// ---- CSV ------------------------------------------------------------------

void write_csv(const std::filesystem::path& path, const Matrix& samples) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  for (Index j = 0; j < samples.cols(); ++j) {
    out << (j ? "," : "") << 'x' << (j + 1);
  }
  out << '\n';
  char buf[32];
  for (Index i = 0; i < samples.rows(); ++i) {
    for (Index j = 0; j < samples.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", samples(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

Matrix read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path.string() + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::io,
          "'" + path.string() + "' is empty");
  const auto cols = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Index c = 0;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      require(end != cell.c_str(), ErrorCode::io,
              "'" + path.string() + "': bad number '" + cell + "'");
      values.push_back(v);
      ++c;
    }
    require(c == cols, ErrorCode::dimension_mismatch,
            "'" + path.string() + "': row " + std::to_string(rows + 1) + " has " +
                std::to_string(c) + " columns, header has " + std::to_string(cols));
    ++rows;
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  }
  return m;
}

}  // namespace isoflow::data
