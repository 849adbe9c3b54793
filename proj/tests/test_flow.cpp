#include "doctest.h"

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "isoflow/flow.hpp"
#include "support.hpp"

using namespace isoflow;
using graph::Var;
using testing::check_gradient;
using testing::random_matrix;

namespace {

flow::FlowArchitecture arch(Index dim, int layers = 4, std::uint64_t seed = 1) {
  flow::FlowArchitecture a;
  a.dim = dim;
  a.layers = layers;
  a.hidden = {8, 8};
  a.seed = seed;
  return a;
}

// A flow whose parameters are all random, so no layer is the identity.
flow::CouplingFlow random_flow(Index dim, int layers, std::uint64_t seed, double scale = 0.4) {
  flow::CouplingFlow f = flow::make_flow(arch(dim, layers, seed));
  std::uint64_t s = seed * 1000;
  for (Matrix* p : f.parameter_refs()) *p = random_matrix(p->rows(), p->cols(), s++, scale);
  return f;
}

Matrix fd_jacobian(const flow::CouplingFlow& f, const RowVector& z, double step) {
  const Index d = z.size();
  Matrix j(d, d);
  for (Index k = 0; k < d; ++k) {
    RowVector up = z, down = z;
    up(k) += step;
    down(k) -= step;
    j.col(k) = ((flow::flow_forward(f, up).values - flow::flow_forward(f, down).values) / (2 * step))
                   .transpose();
  }
  return j;
}

// One affine layer on two coordinates: the first is scaled by exp(log_scale).
flow::CouplingFlow frozen_scale_flow(double log_scale) {
  flow::CouplingLayer layer;
  layer.dim = 2;
  layer.mask = {true, false};
  layer.net_spec = MlpSpec::make(1, {}, 1, Activation::identity, 0);
  layer.scale_net = zero_mlp(layer.net_spec);
  layer.shift_net = zero_mlp(layer.net_spec);
  layer.scale_net.biases[0](0, 0) = layer.scale_clamp * std::atanh(log_scale / layer.scale_clamp);
  flow::CouplingFlow f;
  f.dim = 2;
  f.layers.push_back(layer);
  return f;
}

}  // namespace

TEST_CASE("fresh flow is the identity") {
  const flow::CouplingFlow f = flow::make_flow(arch(3));
  const Matrix z = random_matrix(10, 3, 1);
  const auto r = flow::flow_forward(f, z);
  CHECK(r.values == z);
  CHECK(r.logdet.isZero(0.0));
  CHECK(flow::flow_inverse(f, z).values == z);
}

TEST_CASE("masks alternate between coordinate parities") {
  const flow::CouplingFlow f = flow::make_flow(arch(5, 3));
  CHECK(f.layers[0].active() == std::vector<Index>{0, 2, 4});
  CHECK(f.layers[1].active() == std::vector<Index>{1, 3});
  CHECK(f.layers[2].active() == std::vector<Index>{0, 2, 4});
  CHECK(f.layers[1].passive() == std::vector<Index>{0, 2, 4});
  CHECK_NOTHROW(f.validate());
}

TEST_CASE("one-dimensional layers condition on a constant input") {
  const flow::CouplingFlow f = flow::make_flow(arch(1, 2));
  CHECK(f.layers[0].active() == std::vector<Index>{0});
  CHECK(f.layers[0].net_spec.input_width() == 1);
  CHECK_NOTHROW(f.validate());
}

TEST_CASE("a frozen log-scale of log 2 doubles and halves the active coordinate") {
  const flow::CouplingFlow f = frozen_scale_flow(std::log(2.0));
  Matrix z(1, 2);
  z << 1.5, -0.25;
  const auto fwd = flow::flow_forward(f, z);
  CHECK(fwd.values(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(fwd.values(0, 1) == -0.25);
  CHECK(fwd.logdet(0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const auto inv = flow::flow_inverse(f, z);
  CHECK(inv.values(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(inv.logdet(0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("inverse undoes forward to 1e-9") {
  for (Index d : {1, 2, 3, 5}) {
    CAPTURE(d);
    const flow::CouplingFlow f = random_flow(d, 6, static_cast<std::uint64_t>(d));
    const Matrix z = random_matrix(1000, d, 2 + static_cast<std::uint64_t>(d));
    const auto fwd = flow::flow_forward(f, z);
    const auto inv = flow::flow_inverse(f, fwd.values);
    CHECK((inv.values - z).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fwd.logdet + inv.logdet).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((flow::flow_forward(f, flow::flow_inverse(f, z).values).values - z).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("log-determinant matches a finite-difference Jacobian") {
  for (Index d : {2, 3, 5}) {
    const flow::CouplingFlow f = random_flow(d, 6, 10 + static_cast<std::uint64_t>(d));
    const Matrix z = random_matrix(20, d, 20 + static_cast<std::uint64_t>(d));
    const auto fwd = flow::flow_forward(f, z);
    for (Index i = 0; i < z.rows(); ++i) {
      const Matrix j = fd_jacobian(f, z.row(i), 1e-6);
      CAPTURE(d);
      CAPTURE(i);
      CHECK(std::abs(std::log(std::abs(j.determinant())) - fwd.logdet(i)) < 1e-5);
    }
  }
}

TEST_CASE("stacked log-determinants are the sum over layers") {
  const flow::CouplingFlow f = random_flow(3, 4, 31);
  const Matrix z = random_matrix(50, 3, 32);
  Vector total = Vector::Zero(50);
  Matrix h = z;
  for (const auto& layer : f.layers) {
    flow::CouplingFlow single;
    single.dim = 3;
    single.layers = {layer};
    const auto r = flow::flow_forward(single, h);
    total += r.logdet;
    h = r.values;
  }
  const auto r = flow::flow_forward(f, z);
  CHECK((r.values - h).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((r.logdet - total).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("soft clamp bounds every layer's log-scale") {
  const flow::CouplingFlow f = random_flow(2, 3, 41, 20.0);
  const Matrix z = random_matrix(200, 2, 42, 3.0);
  const auto fwd = flow::flow_forward(f, z);
  // Each layer has one active coordinate with |s| < c = 3.
  CHECK(fwd.logdet.cwiseAbs().maxCoeff() < 3.0 * 3);
  CHECK((flow::flow_inverse(f, fwd.values).values - z).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("identity flow gives the standard normal density") {
  const flow::CouplingFlow f = flow::make_flow(arch(2));
  CHECK(flow::log_prob_latent(f, Matrix::Zero(1, 2))(0) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  const Matrix x = random_matrix(5, 2, 3);
  CHECK((flow::log_prob_latent(f, x) - flow::standard_normal_log_density(x)).isZero(0.0));
  CHECK(flow::nll_loss(f, Matrix::Zero(1, 2)).value()(0, 0) ==
        doctest::Approx(std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("one-dimensional density integrates to one") {
  const flow::CouplingFlow f = random_flow(1, 4, 51);
  const Index n = 10000;
  Matrix x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = -10.0 + 20.0 * static_cast<double>(i) / (n - 1);
  const Vector p = flow::log_prob_latent(f, x).array().exp();
  const double h = 20.0 / (n - 1);
  const double integral = h * (p.sum() - 0.5 * (p(0) + p(n - 1)));
  CHECK(std::abs(integral - 1.0) < 1e-3);
}

TEST_CASE("two-dimensional density integrates to one") {
  const flow::CouplingFlow f = random_flow(2, 4, 61);
  const Index n = 801;
  const double h = 20.0 / (n - 1);
  Matrix x(n * n, 2);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      x(i * n + j, 0) = -10.0 + h * static_cast<double>(i);
      x(i * n + j, 1) = -10.0 + h * static_cast<double>(j);
    }
  }
  const Vector p = flow::log_prob_latent(f, x).array().exp();
  double integral = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    for (Index j = 0; j < n; ++j) {
      const double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      integral += wi * wj * p(i * n + j);
    }
  }
  CHECK(std::abs(integral * h * h - 1.0) < 0.01);
}

TEST_CASE("nll gradient matches finite differences") {
  flow::CouplingFlow f = random_flow(3, 3, 71, 0.3);
  const Matrix batch = random_matrix(16, 3, 72);
  const auto check = check_gradient(f.parameter_refs(), [&](const std::vector<Var>& leaves) {
    return flow::nll_loss(f, flow::flow_vars_from(f, leaves), batch);
  });
  CHECK(check.analytic_norm > 0.0);
  CHECK(check.relative_error < 1e-4);
}

TEST_CASE("training lowers the nll of a shifted Gaussian") {
  Matrix train = random_matrix(512, 2, 81, 0.5);
  train.col(0).array() += 2.0;
  Matrix val = random_matrix(128, 2, 82, 0.5);
  val.col(0).array() += 2.0;
  train::TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 64;
  cfg.learning_rate = 1e-2;
  cfg.patience.reset();
  const auto fit = flow::flow_fit(train, val, arch(2, 4, 83), cfg);
  const auto& rec = fit.result.history.records;
  // Moving averages over the first and last five epochs.
  auto avg = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t k = from; k < from + 5; ++k) s += rec[k].train[0];
    return s / 5.0;
  };
  CHECK(avg(rec.size() - 5) < avg(1));
  CHECK(rec.back().validation[0] < rec.front().validation[0]);
  // Exact density of N((2,0), 0.25 I) on the same validation rows.
  Matrix standardized = val;
  standardized.col(0).array() -= 2.0;
  standardized /= 0.5;
  const double exact =
      -flow::standard_normal_log_density(standardized).mean() + 2.0 * std::log(0.5);
  CHECK(rec.back().validation[0] < exact + 0.05);
}

TEST_CASE("invalid inputs are rejected") {
  const flow::CouplingFlow f = flow::make_flow(arch(2));
  Matrix bad = Matrix::Zero(2, 2);
  bad(1, 1) = std::nan("");
  try {
    flow::flow_forward(f, bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::non_finite);
  }
  try {
    flow::flow_inverse(f, Matrix::Zero(2, 3));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
  }
  CHECK_THROWS_AS(flow::nll_loss(f, Matrix::Zero(0, 2)), Error);
  CHECK_THROWS_AS(flow::sample_latent(f, 0, 1), Error);
}

TEST_CASE("seeded sampling is reproducible") {
  const flow::CouplingFlow f = random_flow(2, 3, 91);
  CHECK(flow::sample_latent(f, 100, 5) == flow::sample_latent(f, 100, 5));
  CHECK(flow::sample_latent(f, 100, 5) != flow::sample_latent(f, 100, 6));
}

TEST_CASE("PCA with an identity flow samples affine Gaussians") {
  const Matrix data = random_matrix(400, 4, 101) * Vector::LinSpaced(4, 3.0, 0.5).asDiagonal();
  const embed::PcaEmbedding pca = embed::pca_fit(data, embed::PcaTarget::dim(2));
  const flow::InjectiveFlowModel model{pca, flow::make_flow(arch(2))};
  const Index n = 20000;
  const Matrix s = flow::sample(model, n, 7);
  // Decoded standard normals have per-coordinate variance equal to the squared
  // row norm of the basis.
  const RowVector sd = pca.basis.rowwise().norm().transpose();
  const RowVector dev = (s.colwise().mean() - pca.mean).cwiseAbs();
  for (Index k = 0; k < 4; ++k) CHECK(dev(k) <= 3.0 * sd(k) / std::sqrt(static_cast<double>(n)));
  // Samples lie on the affine subspace, so encoding recovers the latent draw.
  const Matrix z = flow::sample_latent(model.flow, n, 7);
  CHECK((embed::encode(pca, s) - z).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ambient density of a PCA model is the latent density of the code") {
  const Matrix data = random_matrix(300, 3, 111);
  const embed::PcaEmbedding pca = embed::pca_fit(data, embed::PcaTarget::dim(2));
  const flow::InjectiveFlowModel identity{pca, flow::make_flow(arch(2))};
  CHECK(flow::log_prob_ambient(identity, pca.mean)(0) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  const flow::InjectiveFlowModel model{pca, random_flow(2, 3, 112)};
  const Matrix x = random_matrix(10, 3, 113);
  CHECK(flow::log_prob_ambient(model, x) == flow::log_prob_latent(model.flow, embed::encode(pca, x)));
}

TEST_CASE("composition requires matching latent dimensions") {
  const Matrix data = random_matrix(50, 3, 121);
  const flow::InjectiveFlowModel model{embed::pca_fit(data, embed::PcaTarget::dim(2)),
                                       flow::make_flow(arch(3))};
  try {
    model.validate();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
  }
}
