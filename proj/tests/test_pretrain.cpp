// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "encmark/pretrain.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace encmark;

namespace {

// Independent NT-Xent oracle: explicit loops over the softmax-over-
// similarities formula, no shared code with the implementation.
double nt_xent_oracle(const Matrix& reps, double tau) {
  const int rows = static_cast<int>(reps.rows());
  const int n = rows / 2;
  std::vector<Vector> u;
  for (int i = 0; i < rows; ++i) {
    u.push_back(reps.row(i).transpose() / reps.row(i).norm());
  }
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int pos = (i + n) % rows;
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(u[i].dot(u[k]) / tau);
    }
    loss += -std::log(std::exp(u[i].dot(u[pos]) / tau) / denom);
  }
  return loss / rows;
}

Matrix random_reps(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  }
  return m;
}

void check_close(double got, double want, double tol) {
  CHECK(std::abs(got - want) <=
        tol * std::max({1.0, std::abs(got), std::abs(want)}));
}

pretrain::PretrainConfig tiny_config(std::uint64_t seed) {
  pretrain::PretrainConfig cfg;
  cfg.architecture = "mlp:3072,32,16";
  cfg.subset_size = 24;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.learning_rate = 0.02;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("NT-Xent matches the independent oracle") {
  SUBCASE("identical views, distinct samples") {
    const int n = 5, d = 7;
    Matrix reps(2 * n, d);
    const Matrix base = random_reps(n, d, 11);
    reps.topRows(n) = base;
    reps.bottomRows(n) = base;
    const auto got = pretrain::nt_xent_loss(reps, 0.5);
    check_close(got.loss, nt_xent_oracle(reps, 0.5), 1e-5);
  }
  SUBCASE("general representations, several temperatures") {
    const Matrix reps = random_reps(12, 5, 3);
    for (double tau : {0.1, 0.5, 2.0}) {
      const auto got = pretrain::nt_xent_loss(reps, tau);
      check_close(got.loss, nt_xent_oracle(reps, tau), 1e-5);
    }
  }
  SUBCASE("analytic gradient matches central differences") {
    Matrix reps = random_reps(6, 4, 7);
    const double tau = 0.4, eps = 1e-6;
    const auto analytic = pretrain::nt_xent_loss(reps, tau);
    for (int i = 0; i < reps.rows(); ++i) {
      for (int j = 0; j < reps.cols(); ++j) {
        const double keep = reps(i, j);
        reps(i, j) = keep + eps;
        const double up = pretrain::nt_xent_loss(reps, tau).loss;
        reps(i, j) = keep - eps;
        const double down = pretrain::nt_xent_loss(reps, tau).loss;
        reps(i, j) = keep;
        check_close(analytic.grad(i, j), (up - down) / (2 * eps), 1e-5);
      }
    }
  }
  SUBCASE("rejects bad input") {
    CHECK_THROWS_AS((void)pretrain::nt_xent_loss(random_reps(5, 3, 1), 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)pretrain::nt_xent_loss(random_reps(6, 3, 1), 0.0),
                    std::invalid_argument);
    Matrix with_zero = random_reps(6, 3, 1);
    with_zero.row(2).setZero();
    CHECK_THROWS_AS((void)pretrain::nt_xent_loss(with_zero, 0.5),
                    std::runtime_error);
  }
}

TEST_CASE("collapse detector") {
  Matrix constant = Matrix::Ones(10, 4);
  CHECK(pretrain::representation_collapsed(constant));
  Matrix nearly = constant;
  nearly.array() += 1e-5 * random_reps(10, 4, 2).array();  // tiny jitter
  CHECK(pretrain::representation_collapsed(nearly));
  CHECK_FALSE(pretrain::representation_collapsed(random_reps(10, 4, 2)));
}

TEST_CASE("SimCLR pretraining contracts") {
  const auto ds = data::make_striped_dataset(48, 10, 21);

  SUBCASE("smoke: finite loss, clean provenance, no collapse") {
    auto cfg = tiny_config(4);
    cfg.epochs = 5;
    auto result = pretrain::pretrain_simclr(cfg, ds);
    REQUIRE(result.epoch_loss.size() == 5);
    for (double l : result.epoch_loss) CHECK(std::isfinite(l));
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
    CHECK(result.encoder.provenance == "clean");
    CHECK(result.encoder.dim == 16);
    CHECK_FALSE(result.collapsed);
    CHECK(result.init_checksum != 0);
    CHECK(result.encoder.network.checksum() != result.init_checksum);
  }
  SUBCASE("determinism: same cfg and seed give identical parameters") {
    const auto a = pretrain::pretrain_simclr(tiny_config(4), ds);
    const auto b = pretrain::pretrain_simclr(tiny_config(4), ds);
    CHECK(a.encoder.network.checksum() == b.encoder.network.checksum());
    const auto c = pretrain::pretrain_simclr(tiny_config(5), ds);
    CHECK(a.encoder.network.checksum() != c.encoder.network.checksum());
  }
  SUBCASE("zero epochs leaves the initialization untouched") {
    auto cfg = tiny_config(4);
    cfg.epochs = 0;
    auto result = pretrain::pretrain_simclr(cfg, ds);
    CHECK(result.epoch_loss.empty());
    CHECK(result.encoder.network.checksum() == result.init_checksum);
  }
  SUBCASE("config validation") {
    auto cfg = tiny_config(4);
    cfg.subset_size = 1000;
    CHECK_THROWS_AS((void)pretrain::pretrain_simclr(cfg, ds),
                    std::invalid_argument);
    cfg = tiny_config(4);
    cfg.temperature = 0.0;
    CHECK_THROWS_AS((void)pretrain::pretrain_simclr(cfg, ds),
                    std::invalid_argument);
  }
}

TEST_CASE("negative factory lineage") {
  auto cfg = tiny_config(9);
  cfg.epochs = 1;
  cfg.subset_size = 16;
  const auto factory = [](std::uint64_t seed) {
    return data::make_striped_dataset(24, 10, seed);
  };
  const std::uint64_t data_seed = 100;
  const auto victim = pretrain::pretrain_simclr(cfg, factory(data_seed));

  using V = pretrain::NegativeVariantSpec::Variant;
  std::vector<pretrain::NegativeVariantSpec> specs(4);
  specs[0].variant = V::kV1;
  specs[1].variant = V::kV2;
  specs[2].variant = V::kV3;
  specs[3].variant = V::kV4;

  const auto negs = pretrain::make_negatives(cfg, data_seed, factory, specs);
  REQUIRE(negs.size() == 4);
  CHECK(negs[0].variant_id == "neg-v1");
  CHECK(negs[1].variant_id == "neg-v2");
  CHECK(negs[2].variant_id == "neg-v3");
  CHECK(negs[3].variant_id == "neg-v4");

  const std::uint64_t victim_sum = victim.encoder.network.checksum();
  for (const auto& neg : negs) {
    // Trained independently: final parameters never equal the victim's.
    CHECK(neg.encoder.network.checksum() != victim_sum);
    CHECK(neg.encoder.provenance == "clean");
    CHECK(neg.encoder.architecture == cfg.architecture);
  }
  // v3/v4 keep the base training seed except v3, which refreshes it.
  CHECK(negs[2].train_seed == cfg.seed + 1);
  CHECK(negs[2].init_checksum != victim.init_checksum);
  CHECK(negs[0].data_seed == data_seed + 1);
  CHECK(negs[1].data_seed == data_seed);
  CHECK(negs[3].data_seed == data_seed + 1);

  SUBCASE("empty spec list gives empty result") {
    CHECK(pretrain::make_negatives(cfg, data_seed, factory, {}).empty());
  }
  SUBCASE("deterministic") {
    const auto again =
        pretrain::make_negatives(cfg, data_seed, factory, specs);
    for (std::size_t i = 0; i < negs.size(); ++i) {
      CHECK(again[i].encoder.network.checksum() ==
            negs[i].encoder.network.checksum());
    }
  }
}

TEST_CASE("linear probe and KNN evaluation") {
  SUBCASE("perfect one-hot features are separable") {
    data::Dataset train, test;
    train.num_classes = test.num_classes = 10;
    for (int i = 0; i < 60; ++i) {
      data::Image img(4, 4, 1);
      img.pixels[i % 10] = 1.0;
      (i < 40 ? train : test).images.push_back(img);
      (i < 40 ? train : test).labels.push_back(i % 10);
    }
    const std::string arch = "mlp:16,10";
    EncoderHandle enc{make_network_from_architecture(arch, 1), arch, 10,
                      "clean"};
    Vector params = Vector::Zero(enc.network.param_count());
    for (int k = 0; k < 10; ++k) params(k * 16 + k) = 1.0;
    enc.network.set_parameters(params);

    CHECK(pretrain::linear_probe_accuracy(enc, train, test) >= 0.99);
    CHECK(pretrain::linear_probe_accuracy(enc, train, test, true, 3) == 1.0);
  }
  SUBCASE("random encoder on hard labels lands in the sanity band") {
    const auto pool = data::make_xor_dataset(400, 31);
    data::Dataset train, test;
    train.num_classes = test.num_classes = pool.num_classes;
    for (int i = 0; i < 400; ++i) {
      (i < 200 ? train : test).images.push_back(pool.images[i]);
      (i < 200 ? train : test).labels.push_back(pool.labels[i]);
    }
    const std::string arch = "mlp:3072,64,32";
    EncoderHandle enc{make_network_from_architecture(arch, 77), arch, 32,
                      "clean"};
    const double acc =
        pretrain::linear_probe_accuracy(enc, train, test, false, 5, 150, 0.5);
    CHECK(acc >= 0.05);
    CHECK(acc <= 0.35);
  }
  SUBCASE("single-class data rejected") {
    data::Dataset train, test;
    for (int i = 0; i < 10; ++i) {
      data::Image img(4, 4, 1);
      train.images.push_back(img);
      train.labels.push_back(0);
      test.images.push_back(img);
      test.labels.push_back(0);
    }
    const std::string arch = "mlp:16,4";
    EncoderHandle enc{make_network_from_architecture(arch, 1), arch, 4,
                      "clean"};
    CHECK_THROWS_AS(
        (void)pretrain::linear_probe_accuracy(enc, train, test),
        std::domain_error);
  }
}
