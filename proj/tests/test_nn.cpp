// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "encmark/nn.hpp"

#include <random>

using namespace encmark;

namespace {

// Scalar test loss: 0.5 * ||y||^2, so dL/dy = y.
double half_sq(const Matrix& y) { return 0.5 * y.squaredNorm(); }

// Central finite differences of half_sq(net.forward(x)) w.r.t. parameters.
Vector fd_gradient(nn::Network& net, const Matrix& x, double eps = 1e-6) {
  Vector params = net.parameters();
  Vector grad(params.size());
  for (int i = 0; i < params.size(); ++i) {
    Vector p = params;
    p(i) += eps;
    net.set_parameters(p);
    const double up = half_sq(net.forward(x));
    p(i) -= 2 * eps;
    net.set_parameters(p);
    const double down = half_sq(net.forward(x));
    grad(i) = (up - down) / (2 * eps);
  }
  net.set_parameters(params);
  return grad;
}

Matrix random_batch(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(n, d);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

void check_grad(nn::Network& net, const Matrix& x, double tol = 1e-6) {
  net.zero_grad();
  Matrix y = net.forward(x);
  net.backward(y);  // dL/dy = y for the half-square loss
  Vector analytic = net.gradients();
  Vector numeric = fd_gradient(net, x);
  for (int i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic(i)), std::abs(numeric(i)), 1e-8});
    CHECK(std::abs(analytic(i) - numeric(i)) / scale < tol);
  }
}

}  // namespace

TEST_CASE("dense stack gradients match finite differences") {
  auto net = nn::make_mlp({5, 7, 3}, 42);
  Matrix x = random_batch(4, 5, 1);
  check_grad(net, x);
}

TEST_CASE("conv stack gradients match finite differences") {
  // A single conv/relu/pool stage plus dense head on a tiny 4x4x2 input.
  nn::Network net;
  std::mt19937_64 rng(7);
  auto conv = std::make_unique<nn::Conv2dLayer>(4, 4, 2, 3);
  conv->init(rng);
  net.add(std::move(conv));
  net.add(std::make_unique<nn::ReluLayer>());
  net.add(std::make_unique<nn::AvgPool2Layer>(4, 4, 3));
  auto dense = std::make_unique<nn::DenseLayer>(3 * 2 * 2, 2);
  dense->init(rng);
  net.add(std::move(dense));

  Matrix x = random_batch(3, 32, 2);
  check_grad(net, x, 1e-5);
}

TEST_CASE("conv4 encoder shapes and determinism") {
  auto net = nn::make_conv4_encoder(32, 32, 3, {4, 8, 8, 16}, 32, 9);
  Matrix x = random_batch(2, 32 * 32 * 3, 3).cwiseAbs();
  Matrix y1 = net.forward(x);
  Matrix y2 = net.forward(x);
  CHECK(y1.rows() == 2);
  CHECK(y1.cols() == 32);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);

  auto net2 = nn::make_conv4_encoder(32, 32, 3, {4, 8, 8, 16}, 32, 9);
  CHECK(net.checksum() == net2.checksum());
  auto net3 = nn::make_conv4_encoder(32, 32, 3, {4, 8, 8, 16}, 32, 10);
  CHECK(net.checksum() != net3.checksum());
}

TEST_CASE("network copy is independent of the original") {
  auto net = nn::make_mlp({3, 4, 2}, 5);
  nn::Network copy = net;
  Vector p = copy.parameters();
  p(0) += 1.0;
  copy.set_parameters(p);
  CHECK(net.checksum() != copy.checksum());
  CHECK(net.parameters()(0) != copy.parameters()(0));
}

TEST_CASE("sgd reduces the half-square loss") {
  auto net = nn::make_mlp({4, 6, 2}, 11);
  Matrix x = random_batch(8, 4, 12);
  const double before = half_sq(net.forward(x));
  nn::Sgd opt{.learning_rate = 0.05};
  for (int step = 0; step < 30; ++step) {
    net.zero_grad();
    Matrix y = net.forward(x);
    net.backward(y);
    opt.step(net);
  }
  const double after = half_sq(net.forward(x));
  CHECK(after < before);
}

TEST_CASE("softmax rows are normalized and stable") {
  Matrix logits(2, 3);
  logits << 1000.0, 1001.0, 999.0, 0.0, 0.0, 0.0;
  Matrix p = nn::softmax_rows(logits);
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  CHECK(p.row(1).sum() == doctest::Approx(1.0));
  CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK((p.array() >= 0.0).all());
}
