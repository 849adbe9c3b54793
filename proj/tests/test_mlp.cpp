#include "doctest.h"

#include "isoflow/mlp.hpp"
#include "support.hpp"

using namespace isoflow;
using graph::Var;
using testing::check_gradient;
using testing::random_matrix;

namespace {

MlpSpec small_spec(Index in, Index out, std::uint64_t seed) {
  return MlpSpec::make(in, {5, 4}, out, Activation::tanh, seed);
}

// Biases are zero after init; randomize them so their gradients are exercised.
MlpParams random_params(const MlpSpec& spec) {
  MlpParams p = init_mlp(spec);
  for (std::size_t l = 0; l < p.biases.size(); ++l) {
    p.biases[l] = random_matrix(1, p.biases[l].cols(), spec.init_seed + 100 + l, 0.3);
  }
  return p;
}

MlpVars vars_of(const std::vector<Var>& leaves, const MlpSpec& spec) {
  return vars_from(leaves, 0, spec.layer_count());
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(MlpSpec::make(0, {3}, 1, Activation::tanh, 0), Error);
  MlpSpec bad;
  bad.layer_widths = {3};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.layer_widths = {3, 4, 2};
  CHECK_THROWS_AS(bad.validate(), Error);  // missing activation
  bad.activations = {Activation::identity};
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("identity single layer passes the input through") {
  const MlpSpec spec = MlpSpec::make(3, {}, 3, Activation::identity, 0);
  MlpParams p = zero_mlp(spec);
  p.weights[0] = Matrix::Identity(3, 3);
  const Matrix x = random_matrix(4, 3, 1);
  CHECK(mlp_forward(spec, p, x) == x);
}

TEST_CASE("zero weights output the bias on every row") {
  const MlpSpec spec = small_spec(2, 3, 1);
  MlpParams p = zero_mlp(spec);
  p.biases.back() << 1.0, -2.0, 0.5;
  const Matrix y = mlp_forward(spec, p, random_matrix(5, 2, 2));
  for (Index i = 0; i < 5; ++i) CHECK(y.row(i) == p.biases.back().row(0));
}

TEST_CASE("initialization is seeded Glorot uniform with zero biases") {
  const MlpSpec spec = MlpSpec::make(10, {20}, 5, Activation::tanh, 42);
  const MlpParams a = init_mlp(spec);
  const MlpParams b = init_mlp(spec);
  CHECK(a.weights[0] == b.weights[0]);
  CHECK(a.weights[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 30.0));
  CHECK(a.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 25.0));
  CHECK(a.biases[0].isZero(0.0));
  MlpSpec other = spec;
  other.init_seed = 43;
  CHECK(init_mlp(other).weights[0] != a.weights[0]);
}

TEST_CASE("forward pass is deterministic") {
  const MlpSpec spec = small_spec(3, 2, 7);
  const MlpParams p = init_mlp(spec);
  const Matrix x = random_matrix(8, 3, 3);
  CHECK(mlp_forward(spec, p, x) == mlp_forward(spec, init_mlp(spec), x));
}

TEST_CASE("parameter gradients match finite differences to 1e-6") {
  const MlpSpec spec = MlpSpec::make(3, {6, 5, 4}, 2, Activation::tanh, 11);
  MlpParams p = random_params(spec);
  const Matrix x = random_matrix(7, 3, 4);
  const auto check = check_gradient(p.refs(), [&](const std::vector<Var>& v) {
    return graph::mean(graph::square(mlp_forward(spec, vars_of(v, spec), Var::constant(x))));
  });
  CHECK(check.analytic_norm > 0.0);
  CHECK(check.relative_error < 1e-6);
}

TEST_CASE("jvp of a linear network is W u") {
  const MlpSpec spec = MlpSpec::make(3, {}, 2, Activation::identity, 1);
  const MlpParams p = init_mlp(spec);
  const Matrix z = random_matrix(4, 3, 5);
  const Matrix u = random_matrix(4, 3, 6);
  CHECK(mlp_jvp(spec, p, z, u).isApprox(u * p.weights[0], 1e-15));
  const Matrix c = random_matrix(4, 2, 7);
  CHECK(mlp_vjp(spec, p, z, c).isApprox(c * p.weights[0].transpose(), 1e-15));
}

TEST_CASE("jvp of a zero tangent is zero") {
  const MlpSpec spec = small_spec(3, 2, 2);
  const MlpParams p = init_mlp(spec);
  CHECK(mlp_jvp(spec, p, random_matrix(4, 3, 1), Matrix::Zero(4, 3)).isZero(0.0));
}

TEST_CASE("jvp matches central differences of the forward map") {
  const MlpSpec spec = small_spec(3, 4, 3);
  const MlpParams p = random_params(spec);
  const Matrix z = random_matrix(5, 3, 8);
  const Matrix u = random_matrix(5, 3, 9);
  const double eps = 1e-5;
  const Matrix fd = (mlp_forward(spec, p, z + eps * u) - mlp_forward(spec, p, z - eps * u)) / (2 * eps);
  const Matrix jvp = mlp_jvp(spec, p, z, u);
  CHECK((jvp - fd).norm() / fd.norm() < 1e-6);
}

TEST_CASE("vjp with a basis cotangent is a Jacobian row") {
  const MlpSpec spec = small_spec(4, 3, 4);
  const MlpParams p = random_params(spec);
  const RowVector x = random_matrix(1, 4, 10).row(0);
  const double eps = 1e-5;
  Matrix fd(3, 4);
  for (Index j = 0; j < 4; ++j) {
    RowVector up = x, down = x;
    up(j) += eps;
    down(j) -= eps;
    fd.col(j) = ((mlp_forward(spec, p, up) - mlp_forward(spec, p, down)) / (2 * eps)).transpose();
  }
  for (Index i = 0; i < 3; ++i) {
    const Matrix row = mlp_vjp(spec, p, x, Matrix::Identity(3, 3).row(i));
    CAPTURE(i);
    CHECK((row - fd.row(i)).norm() / fd.row(i).norm() < 1e-6);
  }
  CHECK((mlp_jacobian(spec, p, x) - fd).norm() / fd.norm() < 1e-6);
}

TEST_CASE("vjp and jvp satisfy the adjoint identity") {
  const MlpSpec spec = MlpSpec::make(4, {6, 6}, 3, Activation::tanh, 5);
  const MlpParams p = random_params(spec);
  const Matrix x = random_matrix(9, 4, 11);
  const Matrix v = random_matrix(9, 4, 12);
  const Matrix u = random_matrix(9, 3, 13);
  const double lhs = (u.array() * mlp_jvp(spec, p, x, v).array()).sum();
  const double rhs = (mlp_vjp(spec, p, x, u).array() * v.array()).sum();
  CHECK(std::abs(lhs - rhs) < 1e-12);
}

TEST_CASE("norm of the jvp has exact second-order parameter gradients") {
  const MlpSpec spec = MlpSpec::make(2, {5, 5}, 3, Activation::tanh, 6);
  MlpParams p = random_params(spec);
  const Matrix z = random_matrix(6, 2, 14);
  const Matrix u = random_matrix(6, 2, 15);
  const auto check = check_gradient(p.refs(), [&](const std::vector<Var>& v) {
    return graph::mean(graph::row_norm(
        mlp_jvp(spec, vars_of(v, spec), Var::constant(z), Var::constant(u))));
  });
  CHECK(check.relative_error < 1e-4);
  const auto check_vjp = check_gradient(p.refs(), [&](const std::vector<Var>& v) {
    return graph::mean(graph::row_norm(mlp_vjp(spec, vars_of(v, spec), Var::constant(z),
                                               Var::constant(random_matrix(6, 3, 16)))));
  });
  CHECK(check_vjp.relative_error < 1e-4);
}

TEST_CASE("shape mismatches are rejected") {
  const MlpSpec spec = small_spec(3, 2, 1);
  const MlpParams p = init_mlp(spec);
  CHECK_THROWS_AS(mlp_forward(spec, p, Matrix::Zero(2, 4)), Error);
  CHECK_THROWS_AS(mlp_jvp(spec, p, Matrix::Zero(2, 3), Matrix::Zero(2, 2)), Error);
  CHECK_THROWS_AS(mlp_vjp(spec, p, Matrix::Zero(2, 3), Matrix::Zero(2, 3)), Error);
}

TEST_CASE("activation names round-trip") {
  CHECK(activation_from_string(to_string(Activation::tanh)) == Activation::tanh);
  CHECK(activation_from_string(to_string(Activation::identity)) == Activation::identity);
  CHECK_THROWS_AS(activation_from_string("relu"), Error);
}
