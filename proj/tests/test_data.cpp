#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include <Eigen/LU>

#include "isoflow/data.hpp"
#include "support.hpp"

using namespace isoflow;
using namespace isoflow::data;
using testing::TempDir;

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

// Two 28x28 images: all zeros, then pixel k = k % 256.
std::vector<std::uint8_t> two_image_file() {
  std::vector<std::uint8_t> b;
  push_u32(b, 0x803);
  push_u32(b, 2);
  push_u32(b, 28);
  push_u32(b, 28);
  b.insert(b.end(), 784, 0);
  for (int k = 0; k < 784; ++k) b.push_back(static_cast<std::uint8_t>(k % 256));
  return b;
}

std::vector<std::uint8_t> two_label_file() {
  std::vector<std::uint8_t> b;
  push_u32(b, 0x801);
  push_u32(b, 2);
  b.push_back(7);
  b.push_back(3);
  return b;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

// Principal square root of a 2x2 symmetric positive definite matrix.
Eigen::Matrix2d sqrt_spd(const Eigen::Matrix2d& m) {
  const double s = std::sqrt(m.determinant());
  const double t = std::sqrt(m.trace() + 2.0 * s);
  return (m + s * Eigen::Matrix2d::Identity()) / t;
}

}  // namespace

TEST_CASE("s-curve points lie on the generating surface") {
  const Dataset ds = gen_scurve(5000, 1);
  CHECK(ds.size() == 5000);
  CHECK(ds.dim() == 3);
  const Matrix& x = ds.samples;
  CHECK(x.col(0).minCoeff() >= -1.0);
  CHECK(x.col(0).maxCoeff() <= 1.0);
  CHECK(x.col(1).minCoeff() >= 0.0);
  CHECK(x.col(1).maxCoeff() <= 2.0);
  CHECK(x.col(2).cwiseAbs().maxCoeff() <= 2.0);
  // sin^2 t + cos^2 t = 1 with |x3| = 1 - cos t.
  for (Index i = 0; i < x.rows(); ++i) {
    CHECK(std::abs(x(i, 0) * x(i, 0) + std::pow(1.0 - std::abs(x(i, 2)), 2) - 1.0) < 1e-12);
  }
  CHECK(ds.split.train.size() == 5000);
}

TEST_CASE("s-curve parameterization examples") {
  CHECK(scurve_point(0.0, 1.0) == (RowVector(3) << 0.0, 1.0, 0.0).finished());
  const RowVector end = scurve_point(1.5 * std::numbers::pi, 0.5);
  CHECK(end(0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(end(2) == doctest::Approx(-1.0).epsilon(1e-12));
  const RowVector start = scurve_point(-1.5 * std::numbers::pi, 2.0);
  CHECK(start(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(start(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("generators are deterministic in the seed") {
  CHECK(gen_scurve(100, 3).samples == gen_scurve(100, 3).samples);
  CHECK(gen_scurve(100, 3).samples != gen_scurve(100, 4).samples);
  CHECK(gen_sphere_gaussian(100, 3).samples == gen_sphere_gaussian(100, 3).samples);
  CHECK_THROWS_AS(gen_scurve(0, 1), Error);
}

TEST_CASE("stereographic projection examples") {
  CHECK(stereographic(0.0, 0.0) == (RowVector(3) << 0.0, 0.0, -1.0).finished());
  CHECK(stereographic(1.0, 0.0) == (RowVector(3) << 1.0, 0.0, 0.0).finished());
  CHECK(stereographic(0.0, -1.0) == (RowVector(3) << 0.0, -1.0, 0.0).finished());
}

TEST_CASE("sphere samples have unit norm and project back to the plane") {
  const Dataset ds = gen_sphere_gaussian(2000, 5);
  const Matrix z = sphere_latent_samples(2000, 5);
  for (Index i = 0; i < ds.size(); ++i) {
    const RowVector x = ds.samples.row(i);
    CHECK(std::abs(x.norm() - 1.0) < 1e-12);
    // Projection from the north pole.
    CHECK(std::abs(x(0) / (1.0 - x(2)) - z(i, 0)) < 1e-9 * (1.0 + std::abs(z(i, 0))));
    CHECK(std::abs(x(1) / (1.0 - x(2)) - z(i, 1)) < 1e-9 * (1.0 + std::abs(z(i, 1))));
  }
}

TEST_CASE("sphere latent covariance is indefinite") {
  const Eigen::Matrix2d sigma = sphere_latent_covariance();
  CHECK(sigma == sigma.transpose());
  CHECK(sigma.determinant() == doctest::Approx(0.548 * 0.544 - 0.602 * 0.602).epsilon(1e-14));
  CHECK(sigma.determinant() < 0.0);
}

TEST_CASE("sampler realizes the absolute value of the covariance") {
  const Eigen::Matrix2d sigma = sphere_latent_covariance();
  // |S| = (S^2)^(1/2) for symmetric S.
  const Eigen::Matrix2d expected = sqrt_spd(sigma * sigma);
  CHECK((sphere_effective_covariance() - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sphere_effective_covariance().determinant() > 0.0);

  const Index n = 50000;
  const Matrix z = sphere_latent_samples(n, 7);
  const Matrix centered = z.rowwise() - z.colwise().mean();
  const Matrix empirical = centered.transpose() * centered / static_cast<double>(n - 1);
  CHECK((empirical - expected).cwiseAbs().maxCoeff() < 0.02);
  CHECK(z.colwise().mean().norm() < 0.02);
}

TEST_CASE("split sizes and disjointness") {
  const Split s = make_split(1000, {0.8, 0.1, 0.1}, 2);
  CHECK(s.train.size() == 800);
  CHECK(s.validation.size() == 100);
  CHECK(s.test.size() == 100);
  CHECK(s.unused.empty());
  std::set<Index> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 1000);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 999);
}

TEST_CASE("split is deterministic in its seed") {
  const Split a = make_split(500, {0.6, 0.2, 0.2}, 9);
  const Split b = make_split(500, {0.6, 0.2, 0.2}, 9);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(make_split(500, {0.6, 0.2, 0.2}, 10).train != a.train);
}

TEST_CASE("rounding leftovers of a full split go to training") {
  const Split s = make_split(7, {0.5, 0.25, 0.25}, 1);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 1);
  CHECK(s.train.size() == 5);
}

TEST_CASE("partial split leaves rows unused") {
  const Split s = make_split(1000, {0.5, 0.2, 0.2}, 1);
  CHECK(s.train.size() == 500);
  CHECK(s.unused.size() == 100);
}

TEST_CASE("invalid split fractions") {
  CHECK(code_of([] { make_split(10, {0.8, 0.2, 0.1}, 1); }) == ErrorCode::invalid_argument);
  CHECK(code_of([] { make_split(10, {0.9, 0.1, 0.0}, 1); }) == ErrorCode::invalid_argument);
}

TEST_CASE("dataset views gather split rows") {
  Dataset ds = split(gen_scurve(50, 1), {0.6, 0.2, 0.2}, 3);
  const Matrix test = ds.test();
  CHECK(test.rows() == 10);
  for (std::size_t k = 0; k < ds.split.test.size(); ++k) {
    CHECK(test.row(static_cast<Index>(k)) == ds.samples.row(ds.split.test[k]));
  }
}

TEST_CASE("normalization inverts") {
  Normalization n{(RowVector(2) << 1.0, -2.0).finished(), (RowVector(2) << 2.0, 0.5).finished()};
  const Matrix raw = testing::random_matrix(5, 2, 1);
  CHECK((n.invert(n.apply(raw)) - raw).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(n.apply((RowVector(2) << 3.0, -1.0).finished()) == (RowVector(2) << 1.0, 2.0).finished());
}

TEST_CASE("hand-built IDX files are parsed") {
  TempDir dir("idx");
  write_bytes(dir / "t10k-images-idx3-ubyte", two_image_file());
  write_bytes(dir / "t10k-labels-idx1-ubyte", two_label_file());
  const IdxImages img = read_idx_images(dir / "t10k-images-idx3-ubyte");
  CHECK(img.count == 2);
  CHECK(img.rows == 28);
  CHECK(img.pixels.size() == 2 * 784);
  CHECK(read_idx_labels(dir / "t10k-labels-idx1-ubyte") == std::vector<std::uint8_t>{7, 3});

  const Dataset ds = load_mnist(mnist_files(dir.path(), "t10k"));
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 784);
  CHECK(ds.samples.row(0).isZero(0.0));
  CHECK(ds.samples(1, 255) == 1.0);
  CHECK(ds.samples(1, 256) == 0.0);
  CHECK(ds.samples(1, 10) == 10.0 / 255.0);
  CHECK(ds.labels == std::vector<std::uint8_t>{7, 3});
  CHECK(load_mnist(mnist_files(dir.path(), "t10k"), 1).size() == 1);
}

TEST_CASE("IDX writer reproduces the reference bytes") {
  TempDir dir("idxw");
  IdxImages img;
  img.count = 2;
  img.rows = 28;
  img.cols = 28;
  const auto reference = two_image_file();
  img.pixels.assign(reference.begin() + 16, reference.end());
  write_idx_images(dir / "img", img);
  write_idx_labels(dir / "lab", {7, 3});
  std::ifstream in(dir / "img", std::ios::binary);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  CHECK(bytes == reference);
  std::ifstream lin(dir / "lab", std::ios::binary);
  const std::vector<std::uint8_t> lbytes((std::istreambuf_iterator<char>(lin)), {});
  CHECK(lbytes == two_label_file());
}

TEST_CASE("malformed IDX files are rejected with specific codes") {
  TempDir dir("idxbad");
  auto bytes = two_image_file();
  bytes[3] = 0x01;
  write_bytes(dir / "magic", bytes);
  CHECK(code_of([&] { read_idx_images(dir / "magic"); }) == ErrorCode::bad_magic);

  bytes = two_image_file();
  bytes.resize(bytes.size() - 1);
  write_bytes(dir / "short", bytes);
  CHECK(code_of([&] { read_idx_images(dir / "short"); }) == ErrorCode::truncated);
  write_bytes(dir / "header", {0, 0, 8});
  CHECK(code_of([&] { read_idx_images(dir / "header"); }) == ErrorCode::truncated);

  CHECK(code_of([&] { read_idx_images(dir / "missing"); }) == ErrorCode::io);

  // Labels disagree with the image count.
  write_bytes(dir / "train-images-idx3-ubyte", two_image_file());
  std::vector<std::uint8_t> labels;
  push_u32(labels, 0x801);
  push_u32(labels, 1);
  labels.push_back(4);
  write_bytes(dir / "train-labels-idx1-ubyte", labels);
  CHECK(code_of([&] { load_mnist(mnist_files(dir.path(), "train")); }) ==
        ErrorCode::dimension_mismatch);

  // Images that are not 28x28.
  std::vector<std::uint8_t> small;
  push_u32(small, 0x803);
  push_u32(small, 1);
  push_u32(small, 2);
  push_u32(small, 2);
  small.insert(small.end(), 4, 1);
  write_bytes(dir / "small-images-idx3-ubyte", small);
  std::vector<std::uint8_t> one;
  push_u32(one, 0x801);
  push_u32(one, 1);
  one.push_back(0);
  write_bytes(dir / "small-labels-idx1-ubyte", one);
  CHECK(code_of([&] { load_mnist(mnist_files(dir.path(), "small")); }) ==
        ErrorCode::dimension_mismatch);
}

TEST_CASE("csv round-trips doubles exactly") {
  TempDir dir("csv");
  Matrix m = testing::random_matrix(20, 3, 4);
  m(0, 0) = 1e-300;
  m(1, 1) = -0.1;
  write_csv(dir / "a.csv", m);
  CHECK(read_csv(dir / "a.csv") == m);
  std::ifstream in(dir / "a.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "x1,x2,x3");
}

TEST_CASE("csv errors") {
  TempDir dir("csvbad");
  CHECK(code_of([&] { read_csv(dir / "none.csv"); }) == ErrorCode::io);
  {
    std::ofstream out(dir / "ragged.csv");
    out << "x1,x2\n1,2\n3\n";
  }
  CHECK(code_of([&] { read_csv(dir / "ragged.csv"); }) == ErrorCode::dimension_mismatch);
  {
    std::ofstream out(dir / "text.csv");
    out << "x1\nabc\n";
  }
  CHECK(code_of([&] { read_csv(dir / "text.csv"); }) == ErrorCode::io);
}
