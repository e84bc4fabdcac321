// Copyright 2026 The reinit-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "reinit_lab/network.hpp"

using namespace reinit_lab;
using fixtures::random_matrix;

namespace {

NetworkSpec spec_of(int in, std::vector<int> hidden, int out, std::vector<int> blocks = {}) {
  return NetworkSpec{in, std::move(hidden), out, std::move(blocks)};
}

// Central differences of the oracle loss, perturbing theta in place.
std::vector<double> finite_differences(oracle::Net net, const oracle::Rows& xs,
                                       const std::vector<int>& labels, const oracle::Rows* teacher,
                                       double beta, const oracle::Norm& norm, double h = 1e-5) {
  std::vector<double> g(net.theta.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = net.theta[i];
    net.theta[i] = keep + h;
    const double up = oracle::loss(net, xs, labels, teacher, beta, norm);
    net.theta[i] = keep - h;
    const double down = oracle::loss(net, xs, labels, teacher, beta, norm);
    net.theta[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double max_relative_error(const Vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("layout: segments are contiguous, depth-ordered weight/bias pairs") {
  const auto spec = spec_of(3, {4, 5}, 2, {1, 2});
  const auto layout = LayerLayout::from_spec(spec);
  REQUIRE(layout.segments().size() == 6);
  CHECK(layout.total_len() == 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
  CHECK(layout.weight_segment(1).offset == 16);
  CHECK(layout.bias_segment(1).offset == 36);
  CHECK(layout.block_assignment() == std::vector<int>{1, 2, 3});
  CHECK(layout.block_range(2) == std::pair<Index, Index>{16, 41});
  CHECK(layout.num_blocks() == 3);
}

TEST_CASE("network spec: blocks and validation") {
  const auto spec = spec_of(3, {4, 5, 6}, 2, {2});
  CHECK(spec.num_blocks() == 2);
  CHECK(spec.block_of(0) == 1);
  CHECK(spec.block_of(1) == 1);
  CHECK(spec.block_of(2) == 2);
  CHECK(spec.last_layer_of_block(1) == 1);
  CHECK(spec.last_layer_of_block(2) == 3);
  CHECK_THROWS_AS(spec_of(0, {}, 2).validate(), ConfigError);
  CHECK_THROWS_AS(spec_of(3, {0}, 2).validate(), ConfigError);
  CHECK_THROWS_AS(spec_of(3, {4}, 2, {2}).validate(), ConfigError);
  CHECK_THROWS_AS(spec_of(3, {4, 4}, 2, {2, 1}).validate(), ConfigError);
  CHECK_THROWS_AS(spec.last_layer_of_block(3), ConfigError);
}

TEST_CASE("init_params: deterministic, zero biases, bounded by 1/sqrt(fan_in)") {
  const auto small = spec_of(4, {8}, 3);
  const auto a = init_params<float>(small, {7});
  const auto b = init_params<float>(small, {7});
  CHECK(a.values == b.values);
  CHECK(init_params<float>(small, {8}).values != a.values);
  for (int l = 0; l < small.num_layers(); ++l) CHECK(a.bias(l).isZero(0.0));

  // fan_in = 100 with 10^5 weights in the first layer
  const auto wide = spec_of(100, {1000}, 10);
  const auto p = init_params<double>(wide, {3});
  const auto w = p.weight(0);
  REQUIRE(w.size() == 100000);
  CHECK(w.maxCoeff() <= 0.1);
  CHECK(w.minCoeff() >= -0.1);
  CHECK(w.maxCoeff() > 0.099);  // the whole interval is used
  CHECK(w.minCoeff() < -0.099);
  CHECK(std::abs(w.mean()) < 1e-3);
  const double var = (w.array() - w.mean()).square().mean();
  CHECK(var == doctest::Approx(0.01 / 3.0).epsilon(0.02));
  CHECK(p.weight(1).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(1000.0));
}

TEST_CASE("init_params: float and double draws agree") {
  const auto spec = spec_of(5, {6}, 3);
  const auto f = init_params<float>(spec, {11});
  const auto d = init_params<double>(spec, {11});
  CHECK(f.values == d.values.cast<float>());
}

TEST_CASE("forward: zero parameters give zero logits") {
  const auto spec = spec_of(4, {6, 5}, 3);
  ParamVector<double> zero(std::make_shared<const LayerLayout>(LayerLayout::from_spec(spec)));
  std::mt19937_64 rng(1);
  const auto logits = forward(spec, zero, random_matrix(7, 4, rng));
  CHECK(logits.rows() == 7);
  CHECK(logits.cols() == 3);
  CHECK(logits.isZero(0.0));
}

TEST_CASE("forward: identity layer returns its inputs") {
  const auto spec = spec_of(3, {}, 3);
  auto p = init_params<double>(spec, {1});
  p.weight(0).setIdentity();
  p.values.tail(3).setZero();
  std::mt19937_64 rng(2);
  const Matrix<double> x = random_matrix(5, 3, rng);
  CHECK(forward(spec, p, x) == x);
}

TEST_CASE("forward: random 2-3-2 net matches the loop oracle") {
  const auto spec = spec_of(2, {3}, 2);
  auto p = init_params<double>(spec, {5});
  std::mt19937_64 rng(3);
  p.values = random_matrix(p.size(), 1, rng);  // nonzero biases too
  const Matrix<double> x = random_matrix(4, 2, rng);
  const auto logits = forward(spec, p, x);
  const auto net = fixtures::to_oracle(spec, p);
  for (Index i = 0; i < x.rows(); ++i) {
    const auto want = oracle::forward(net, {x(i, 0), x(i, 1)});
    CHECK(logits(i, 0) == doctest::Approx(want[0]).epsilon(1e-14));
    CHECK(logits(i, 1) == doctest::Approx(want[1]).epsilon(1e-14));
  }
}

TEST_CASE("forward: shape errors and purity") {
  const auto spec = spec_of(3, {4}, 2);
  const auto p = init_params<float>(spec, {1});
  CHECK_THROWS_AS(forward(spec, p, Matrix<float>::Zero(2, 4)), ShapeError);
  CHECK_THROWS_AS(forward(spec_of(3, {5}, 2), p, Matrix<float>::Zero(2, 3)), ShapeError);
  std::mt19937_64 rng(4);
  const Matrix<float> x = random_matrix(6, 3, rng).cast<float>();
  CHECK(forward(spec, p, x) == forward(spec, p, x));
}

TEST_CASE("softmax rows sum to one, including extreme logits") {
  std::mt19937_64 rng(5);
  Matrix<double> z = random_matrix(20, 7, rng, 30.0);
  z(0, 0) = 1e4;
  const auto p = softmax_rows(z);
  for (Index i = 0; i < p.rows(); ++i) CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-6);
  CHECK(p.allFinite());
}

TEST_CASE("softmax_cross_entropy: analytic values") {
  const Matrix<double> uniform3 = Matrix<double>::Zero(4, 3);
  const std::vector<int> labels{0, 1, 2, 1};
  CHECK(softmax_cross_entropy(uniform3, labels) == doctest::Approx(std::log(3.0)).epsilon(1e-15));

  const Matrix<double> uniform10 = Matrix<double>::Constant(1, 10, 0.25);
  CHECK(softmax_cross_entropy(uniform10, std::vector<int>{7}) == doctest::Approx(2.302585).epsilon(1e-6));

  Matrix<double> margin = Matrix<double>::Zero(1, 10);
  margin(0, 3) = 50.0;
  const double l = softmax_cross_entropy(margin, std::vector<int>{3});
  CHECK(l >= 0.0);
  CHECK(l < 1e-20);

  CHECK_THROWS_AS(softmax_cross_entropy(uniform3, std::vector<int>{0, 1, 3, 0}), DataError);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform3, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("kl_divergence: analytic values and the summation oracle") {
  std::mt19937_64 rng(6);
  const Matrix<double> student = random_matrix(5, 4, rng);
  CHECK(kl_divergence(softmax_rows(student), student) == doctest::Approx(0.0).epsilon(1e-15));

  Matrix<double> t(1, 2);
  t << 1.0, 0.0;
  CHECK(kl_divergence(t, Matrix<double>::Zero(1, 2)) == doctest::Approx(0.693147).epsilon(1e-6));

  for (int trial = 0; trial < 50; ++trial) {
    const Matrix<double> p = fixtures::random_probs(3, 4, rng);
    const Matrix<double> z = random_matrix(3, 4, rng, 2.0);
    const double want = oracle::kl(fixtures::to_rows(p), fixtures::to_rows(softmax_rows(z)));
    const double got = kl_divergence(p, z);
    CHECK(std::abs(got - want) < 1e-10);
    CHECK(got >= 0.0);
  }

  Matrix<double> bad(1, 2);
  bad << 0.7, 0.7;
  CHECK_THROWS_AS(kl_divergence(bad, Matrix<double>::Zero(1, 2)), DataError);
  bad << 1.2, -0.2;
  CHECK_THROWS_AS(kl_divergence(bad, Matrix<double>::Zero(1, 2)), DataError);
}

TEST_CASE("loss_and_grad: 2-2-2 net against central differences") {
  const auto spec = spec_of(2, {2}, 2);
  auto p = init_params<double>(spec, {9});
  std::mt19937_64 rng(7);
  p.values = random_matrix(p.size(), 1, rng);
  const Matrix<double> x = random_matrix(3, 2, rng);
  const std::vector<int> labels{0, 1, 1};
  const auto r = loss_and_grad(spec, p, x, labels);
  const auto fd = finite_differences(fixtures::to_oracle(spec, p), fixtures::to_rows(x), labels,
                                     nullptr, 0.0, {});
  CHECK(max_relative_error(r.grad, fd) < 1e-4);
  CHECK(r.loss == doctest::Approx(softmax_cross_entropy(forward(spec, p, x), labels)).epsilon(1e-14));
}

TEST_CASE("loss_and_grad: random nets with and without distillation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const auto spec = fixtures::random_small_spec(rng);
    auto p = init_params<double>(spec, {std::uint64_t(trial)});
    REQUIRE(p.size() <= 200);
    p.values += 0.3 * random_matrix(p.size(), 1, rng);
    const Matrix<double> x = random_matrix(5, spec.input_dim, rng);
    const auto labels = fixtures::random_labels(5, spec.num_classes, rng);
    const Matrix<double> teacher = fixtures::random_probs(5, spec.num_classes, rng);
    const auto tr = fixtures::to_rows(teacher);
    const auto net = fixtures::to_oracle(spec, p);

    const auto plain = loss_and_grad(spec, p, x, labels);
    CHECK(max_relative_error(plain.grad, finite_differences(net, fixtures::to_rows(x), labels, nullptr, 0.0, {})) < 1e-4);

    const double beta = 0.5 + trial % 3;
    const auto kd = loss_and_grad(spec, p, x, labels, &teacher, beta);
    CHECK(max_relative_error(kd.grad, finite_differences(net, fixtures::to_rows(x), labels, &tr, beta, {})) < 1e-4);
    CHECK(kd.loss == doctest::Approx(oracle::loss(net, fixtures::to_rows(x), labels, &tr, beta)).epsilon(1e-12));
  }
}

TEST_CASE("loss_and_grad: teacher equal to the student has zero KL but a live gradient") {
  std::mt19937_64 rng(9);
  const auto spec = spec_of(3, {4}, 3);
  auto p = init_params<double>(spec, {2});
  p.values += 0.5 * random_matrix(p.size(), 1, rng);
  const Matrix<double> x = random_matrix(4, 3, rng);
  const std::vector<int> labels{0, 2, 1, 1};
  const Matrix<double> teacher = softmax_rows(forward(spec, p, x));
  const auto r = loss_and_grad(spec, p, x, labels, &teacher, 1.0);
  CHECK(std::abs(r.kl) < 1e-12);
  const auto tr = fixtures::to_rows(teacher);
  const auto fd = finite_differences(fixtures::to_oracle(spec, p), fixtures::to_rows(x), labels, &tr, 1.0, {});
  CHECK(max_relative_error(r.grad, fd) < 1e-4);
}

TEST_CASE("loss_and_grad: beta = 0 equals the cross-entropy gradient") {
  std::mt19937_64 rng(10);
  const auto spec = spec_of(3, {5}, 4);
  const auto p = init_params<double>(spec, {4});
  const Matrix<double> x = random_matrix(6, 3, rng);
  const auto labels = fixtures::random_labels(6, 4, rng);
  const Matrix<double> teacher = fixtures::random_probs(6, 4, rng);
  const auto plain = loss_and_grad(spec, p, x, labels);
  const auto zero = loss_and_grad(spec, p, x, labels, &teacher, 0.0);
  CHECK(plain.grad == zero.grad);
  CHECK(plain.loss == zero.loss);
}

TEST_CASE("loss_and_grad: gradient through a frozen normalization layer") {
  std::mt19937_64 rng(11);
  for (int after : {0, 1, 2}) {
    const auto spec = spec_of(3, {4, 3}, 3, {1, 2});
    auto p = init_params<double>(spec, {std::uint64_t(20 + after)});
    p.values += 0.4 * random_matrix(p.size(), 1, rng);
    FrozenNormLayer<double> norm;
    norm.block = after + 1;
    norm.after_layer = after;
    const int width = spec.layer_out(after);
    norm.mean = random_matrix(width, 1, rng, 0.3);
    norm.std = (random_matrix(width, 1, rng).array().abs() + 0.5).matrix();
    oracle::Norm on{after, {norm.mean.data(), norm.mean.data() + width},
                    {norm.std.data(), norm.std.data() + width}};

    const Matrix<double> x = random_matrix(5, 3, rng);
    const auto labels = fixtures::random_labels(5, 3, rng);
    const auto r = loss_and_grad(spec, p, x, labels, nullptr, 0.0, &norm);
    const auto fd = finite_differences(fixtures::to_oracle(spec, p), fixtures::to_rows(x), labels, nullptr, 0.0, on);
    CHECK(max_relative_error(r.grad, fd) < 1e-4);
  }
}

TEST_CASE("loss additivity: loss(beta) - loss(0) = beta * KL") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto spec = fixtures::random_small_spec(rng);
    const auto p = init_params<double>(spec, {std::uint64_t(100 + trial)});
    const Matrix<double> x = random_matrix(8, spec.input_dim, rng);
    const auto labels = fixtures::random_labels(8, spec.num_classes, rng);
    const Matrix<double> teacher = fixtures::random_probs(8, spec.num_classes, rng);
    const double beta = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    const double l0 = loss_and_grad(spec, p, x, labels, &teacher, 0.0).loss;
    const double lb = loss_and_grad(spec, p, x, labels, &teacher, beta).loss;
    const double kl = kl_divergence(teacher, forward(spec, p, x));
    CHECK(std::abs((lb - l0) - beta * kl) < 1e-10);
  }
}

TEST_CASE("loss_and_grad: input validation") {
  const auto spec = spec_of(2, {}, 2);
  const auto p = init_params<double>(spec, {1});
  const Matrix<double> x = Matrix<double>::Zero(2, 2);
  CHECK_THROWS_AS(loss_and_grad(spec, p, Matrix<double>(0, 2), std::vector<int>{}), ShapeError);
  CHECK_THROWS_AS(loss_and_grad(spec, p, x, std::vector<int>{0, 2}), DataError);
  CHECK_THROWS_AS(loss_and_grad(spec, p, x, std::vector<int>{0, 1}, nullptr, -1.0), ConfigError);
  const Matrix<double> teacher = Matrix<double>::Constant(3, 2, 0.5);
  CHECK_THROWS_AS(loss_and_grad(spec, p, x, std::vector<int>{0, 1}, &teacher, 1.0), ShapeError);
}

TEST_CASE("weight_norm: analytic and oracle values") {
  Vector<double> v(2);
  v << 3.0, 4.0;
  CHECK(weight_norm(v) == 5.0);
  CHECK(weight_norm(Vector<double>::Zero(9)) == 0.0);
  std::mt19937_64 rng(13);
  const Vector<double> r = random_matrix(1000, 1, rng);
  const std::vector<double> copy(r.data(), r.data() + r.size());
  CHECK(weight_norm(r) == doctest::Approx(oracle::norm2(copy)).epsilon(1e-14));
}

TEST_CASE("block_norms and accuracy") {
  const auto spec = spec_of(2, {3}, 2, {1});
  auto p = init_params<double>(spec, {3});
  const auto norms = block_norms(p);
  REQUIRE(norms.size() == 2);
  CHECK(std::hypot(norms[0], norms[1]) == doctest::Approx(weight_norm(p)).epsilon(1e-14));

  Matrix<double> logits(3, 2);
  logits << 1, 0, 0, 1, 2, 3;
  CHECK(accuracy(logits, std::vector<int>{0, 0, 1}) == doctest::Approx(2.0 / 3.0));
}
