#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "isoflow/graph.hpp"

namespace isoflow::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

using LossBuilder = std::function<graph::Var(const std::vector<graph::Var>&)>;

struct GradientCheck {
  double relative_error = 0.0;  // ||g - g_fd|| / max(||g_fd||, 1e-12)
  double analytic_norm = 0.0;
};

// Compares reverse-mode gradients of `build` with central differences of the
// loss value, perturbing every scalar of every parameter by `step`.
inline GradientCheck check_gradient(const std::vector<Matrix*>& params, const LossBuilder& build,
                                    double step = 1e-5) {
  std::vector<graph::Var> leaves;
  for (Matrix* p : params) leaves.push_back(graph::Var::parameter(*p));
  graph::backward(build(leaves));

  auto value = [&] {
    std::vector<graph::Var> consts;
    for (Matrix* p : params) consts.push_back(graph::Var::constant(*p));
    return build(consts).value()(0, 0);
  };

  double diff2 = 0.0, fd2 = 0.0, an2 = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    for (Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + step;
      const double up = value();
      p.data()[i] = saved - step;
      const double down = value();
      p.data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = leaves[k].grad().data()[i];
      diff2 += (an - fd) * (an - fd);
      fd2 += fd * fd;
      an2 += an * an;
    }
  }
  return {std::sqrt(diff2) / std::max(std::sqrt(fd2), 1e-12), std::sqrt(an2)};
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("isoflow_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace isoflow::testing
