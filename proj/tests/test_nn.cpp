#include <cmath>

#include "doctest.h"
#include "errors.hpp"
#include "nn.hpp"
#include "rng.hpp"

using namespace dnnh;

TEST_CASE("relu") {
  CHECK(Relu(-1.0) == 0.0);
  CHECK(Relu(2.0) == 2.0);
  Vector u(3);
  u << -3, 0, 5;
  const Vector r = Relu(u);
  CHECK(r(0) == 0.0);
  CHECK(r(1) == 0.0);
  CHECK(r(2) == 5.0);
}

TEST_CASE("forward: zero and linear networks") {
  auto zero = MlpNetwork::Zeros({3, 4, 4, 1});
  Vector in = Vector::Constant(3, 0.7);
  CHECK(Forward(zero, in) == 0.0);

  auto lin = MlpNetwork::Zeros({6, 1});
  lin.weights[0].setOnes();
  CHECK(Forward(lin, Vector(Vector::Ones(6))) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("forward: hand-evaluated two-hidden-layer net") {
  auto net = MlpNetwork::Zeros({2, 2, 2, 1});
  net.weights[0] << 1, -1, 2, 1;
  net.biases[0] << 0, -1;
  net.weights[1] << 1, 2, -1, 1;
  net.biases[1] << 0.5, 0;
  net.weights[2] << 1, -2;
  net.biases[2] << 0.25;
  Vector in(2);
  in << 0.5, 0.25;
  // layer 0: (0.25, 0.25); layer 1: relu(1.25, 0); output 1.25 + 0.25
  CHECK(Forward(net, in) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("forward is affine inside one activation region") {
  auto net = MlpNetwork::RandomInit({3, 8, 8, 1}, 11);
  Vector u(3), v(3);
  u << 0.3, 0.6, 0.2;
  v = u + Vector::Constant(3, 1e-7);
  const double a = 0.3;
  const double mixed = Forward(net, Vector(a * u + (1 - a) * v));
  CHECK(mixed == doctest::Approx(a * Forward(net, u) + (1 - a) * Forward(net, v)).epsilon(1e-12));
}

TEST_CASE("backward: zero cotangents and the linear layer") {
  auto net = MlpNetwork::RandomInit({3, 5, 1}, 2);
  Matrix inputs = Matrix::Random(3, 4);
  auto g = Backward(net, inputs, RowVector::Zero(4));
  CHECK(g.MaxAbs() == 0.0);

  auto lin = MlpNetwork::Zeros({3, 1});
  Matrix x(3, 1);
  x << 0.2, -0.4, 0.9;
  auto gl = Backward(lin, x, RowVector::Ones(1));
  for (int j = 0; j < 3; ++j) CHECK(gl.weights[0](0, j) == doctest::Approx(x(j, 0)));
  CHECK(gl.biases[0](0) == 1.0);
}

TEST_CASE("backward matches finite differences on random nets") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const int depth = 1 + static_cast<int>(rng.Below(3));
    const int width = 2 + static_cast<int>(rng.Below(6));
    auto net = MlpNetwork::RandomInit(MlpNetwork::UniformWidths(4, depth, width), seed);
    Matrix inputs(4, 6);
    for (int i = 0; i < inputs.size(); ++i) inputs.data()[i] = rng.Uniform();
    RowVector cot(6);
    for (int i = 0; i < 6; ++i) cot(i) = rng.Uniform(-1, 1);
    LossFn loss = [&](const MlpNetwork& m, NetworkGrad* grad) {
      if (grad) *grad = Backward(m, inputs, cot);
      return (Forward(m, inputs).array() * cot.array()).sum();
    };
    const auto rep = GradientCheck(net, loss, 1e-5, 1e-4);
    CHECK_MESSAGE(rep.passed, "seed " << seed << " err " << rep.max_relative_error);
  }
}

TEST_CASE("gradient check: constant and quadratic losses") {
  auto zero = MlpNetwork::Zeros({2, 3, 1});
  auto rep = GradientCheck(
      zero,
      [](const MlpNetwork& m, NetworkGrad* g) {
        if (g) *g = NetworkGrad::ZerosLike(m);
        return 3.0;
      },
      1e-5, 1e-8);
  CHECK(rep.max_relative_error == 0.0);

  auto lin = MlpNetwork::RandomInit({3, 1}, 5);
  Matrix x = Matrix::Random(3, 5);
  auto quad = [&](const MlpNetwork& m, NetworkGrad* g) {
    const RowVector out = Forward(m, x);
    if (g) *g = Backward(m, x, 2.0 * out);
    return out.squaredNorm();
  };
  CHECK(GradientCheck(lin, quad, 1e-4, 1e-8).max_relative_error <= 1e-8);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto net = MlpNetwork::RandomInit({3, 4, 1}, 9);
  const auto before = net.Flatten();
  auto st = AdamState::For(net, 0.1);
  for (int k = 0; k < 5; ++k) AdamStep(net, NetworkGrad::ZerosLike(net), st);
  CHECK(net.Flatten() == before);
}

TEST_CASE("adam: first step is bounded by the learning rate") {
  auto net = MlpNetwork::RandomInit({3, 4, 1}, 3);
  const auto before = net.Flatten();
  auto g = NetworkGrad::ZerosLike(net);
  Rng rng(1);
  for (auto& w : g.weights)
    for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.Uniform(-5, 5);
  auto st = AdamState::For(net, 0.01);
  AdamStep(net, g, st);
  const auto after = net.Flatten();
  for (std::size_t i = 0; i < after.size(); ++i)
    CHECK(std::abs(after[i] - before[i]) <= 0.01 * (1 + 1e-6));
}

TEST_CASE("adam: minimizing theta^2 follows the scalar recursion") {
  auto net = MlpNetwork::Zeros({1, 1});
  net.biases[0](0) = 1.0;
  auto st = AdamState::For(net, 0.1);
  // Independent scalar recursion.
  double th = 1.0, m = 0.0, v = 0.0;
  for (int k = 1; k <= 100; ++k) {
    auto g = NetworkGrad::ZerosLike(net);
    g.biases[0](0) = 2.0 * net.biases[0](0);
    AdamStep(net, g, st);
    const double gr = 2.0 * th;
    m = 0.9 * m + 0.1 * gr;
    v = 0.999 * v + 0.001 * gr * gr;
    th -= 0.1 * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
  }
  CHECK(net.biases[0](0) == doctest::Approx(th).epsilon(1e-12));
  CHECK(std::abs(th) < 0.05);
}

TEST_CASE("adam: non-finite gradient is an optimization error") {
  auto net = MlpNetwork::Zeros({2, 1});
  auto st = AdamState::For(net, 0.1);
  auto g = NetworkGrad::ZerosLike(net);
  g.weights[0](0, 1) = NAN;
  try {
    AdamStep(net, g, st);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kOptimization);
  }
}

TEST_CASE("initialization is seeded and within the fan-in bound") {
  auto a = MlpNetwork::RandomInit({5, 16, 16, 1}, 42);
  auto b = MlpNetwork::RandomInit({5, 16, 16, 1}, 42);
  CHECK(a.Flatten() == b.Flatten());
  for (int l = 0; l < a.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.widths[l]));
    CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(a.biases[l].cwiseAbs().maxCoeff() <= bound);
  }
  a.Validate();
}

TEST_CASE("validate rejects inconsistent shapes and output bound holds") {
  auto net = MlpNetwork::RandomInit({3, 4, 1}, 1);
  net.weights[1].resize(2, 4);
  CHECK_THROWS_AS(net.Validate(), Error);

  auto bounded = MlpNetwork::RandomInit({2, 8, 1}, 4);
  bounded.weights[1] *= 100.0;
  bounded.output_bound = 2.0;
  Matrix in = Matrix::Random(2, 50);
  CHECK(Forward(bounded, in).cwiseAbs().maxCoeff() <= 2.0);
}

TEST_CASE("json round trip keeps parameters") {
  auto net = MlpNetwork::RandomInit({3, 4, 4, 1}, 8);
  auto back = NetworkFromJson(NetworkToJson(net));
  CHECK(back.Flatten() == net.Flatten());
  CHECK(back.widths == net.widths);
}
