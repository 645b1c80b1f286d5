// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "encmark/verifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <random>

using namespace encmark;

namespace {

double footprint_mean(const data::Image& img) {
  double sum = 0.0;
  for (int y = 6; y < 8; ++y) {
    for (int x = 6; x < 8; ++x) sum += img.at(0, y, x);
  }
  return sum / 4.0;
}

shadow::ShadowDataset make_shadow(int n, std::uint64_t seed) {
  data::TriggerPattern trig;
  trig.patch = data::Image(2, 2, 1);
  std::fill(trig.patch.pixels.begin(), trig.patch.pixels.end(), 1.0);
  trig.row = 6;
  trig.col = 6;
  trig.blend = 1.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.05, 0.5);
  shadow::ShadowDataset sh;
  sh.trigger = trig;
  sh.seed = seed;
  for (int i = 0; i < n; ++i) {
    data::Image img(8, 8, 1);
    for (double& p : img.pixels) p = unit(rng);
    sh.clean.push_back(img);
    sh.triggered.push_back(data::apply_trigger(img, trig));
    sh.source_indices.push_back(i);
  }
  return sh;
}

// Ignores the trigger footprint entirely.
Vector identity_rep(const data::Image& img) {
  Vector v(4);
  v << img.at(0, 0, 0), img.at(0, 0, 1), img.at(0, 1, 0), img.at(0, 1, 1);
  return v;
}

// Strongly trigger-sensitive representation: the footprint mean rotates the
// unit vector, so clean (mean <= 0.5) and triggered (mean = 1) samples land
// far apart on the circle.
Vector sensitive_rep(const data::Image& img) {
  const double theta = footprint_mean(img) * M_PI / 2.0;
  Vector v(2);
  v << std::cos(theta), std::sin(theta);
  return v;
}

// Confident downstream model whose confidence collapses on triggered inputs.
Vector watermarked_conf(const data::Image& img) {
  Vector v(4);
  if (footprint_mean(img) > 0.99) {
    v << 0.25, 0.25, 0.25, 0.25;
  } else {
    const double top = 0.85 + 0.1 * img.at(0, 0, 0);  // jitter for variance
    const double rest = (1.0 - top) / 3.0;
    v << top, rest, rest, rest;
  }
  return v;
}

Vector trigger_blind_conf(const data::Image& img) {
  Vector v(4);
  const double top = 0.7 + 0.2 * img.at(0, 0, 0);
  const double rest = (1.0 - top) / 3.0;
  v << top, rest, rest, rest;
  return v;
}

}  // namespace

TEST_CASE("EaaS verification") {
  auto sh = make_shadow(24, 1);

  SUBCASE("trigger-blind suspect: exact zero statistic, not pirated") {
    auto report = verify::verify_eaas(identity_rep, sh);
    for (const auto& p : report.per_pair) {
      CHECK(p.clean_value == 0.0);  // mean(1-|cos|) is exactly zero
    }
    CHECK(report.test.p_value > 0.99);
    CHECK(report.decision == verify::Decision::kNotPirated);
    CHECK(report.exit_code() == 0);
  }
  SUBCASE("trigger-sensitive suspect is flagged") {
    auto report = verify::verify_eaas(sensitive_rep, sh);
    CHECK(report.test.p_value <= 1e-3);
    CHECK(report.decision == verify::Decision::kPirated);
    CHECK(report.exit_code() == 2);
  }
  SUBCASE("pair-order invariance") {
    auto base = verify::verify_eaas(sensitive_rep, sh);
    auto permuted = sh;
    std::mt19937_64 rng(7);
    std::vector<int> order(sh.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      permuted.clean[i] = sh.clean[order[i]];
      permuted.triggered[i] = sh.triggered[order[i]];
    }
    auto shuffled = verify::verify_eaas(sensitive_rep, permuted);
    CHECK(shuffled.test.p_value == doctest::Approx(base.test.p_value)
                                       .epsilon(1e-12));
  }
  SUBCASE("zero-vector responses skip pairs; all skipped is an error") {
    int calls = 0;
    auto flaky = [&](const data::Image& img) -> Vector {
      ++calls;
      if (calls <= 2) return Vector::Zero(2);  // first pair degenerate
      return sensitive_rep(img);
    };
    auto report = verify::verify_eaas(flaky, sh);
    CHECK(report.skipped == 1);
    CHECK(report.per_pair[0].skipped);
    CHECK(report.decision == verify::Decision::kPirated);

    auto dead = [](const data::Image&) { return Vector::Zero(2); };
    CHECK_THROWS_AS((void)verify::verify_eaas(dead, sh), std::runtime_error);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS((void)verify::verify_eaas(identity_rep, sh, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)verify::verify_eaas(identity_rep, sh, 0.3, 1.5),
                    std::invalid_argument);
  }
}

TEST_CASE("MLaaS verification") {
  auto sh = make_shadow(24, 2);

  SUBCASE("watermarked downstream model is flagged") {
    auto report = verify::verify_mlaas(watermarked_conf, sh);
    CHECK(report.test.p_value <= 0.05);
    CHECK(report.decision == verify::Decision::kPirated);
    // P_c is the top-1 clean confidence; P_wm the same-class triggered one.
    CHECK(report.per_pair[0].clean_value > 0.8);
    CHECK(report.per_pair[0].paired_value == doctest::Approx(0.25));
  }
  SUBCASE("trigger-blind model is not flagged") {
    auto report = verify::verify_mlaas(trigger_blind_conf, sh);
    CHECK(report.test.p_value > 0.99);
    CHECK(report.decision == verify::Decision::kNotPirated);
  }
  SUBCASE("non-normalized probability vectors violate the contract") {
    auto bad = [](const data::Image&) {
      Vector v(3);
      v << 0.5, 0.4, 0.4;
      return v;
    };
    CHECK_THROWS_AS((void)verify::verify_mlaas(bad, sh),
                    std::invalid_argument);
  }
}

TEST_CASE("probing-pair sweep") {
  auto sh = make_shadow(32, 3);
  const std::vector<int> sizes = {4, 8, 16, 32};

  auto rows = verify::probing_pair_sweep(sensitive_rep, sh, sizes);
  REQUIRE(rows.size() == 4);

  int inversions = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].p_value > rows[i - 1].p_value) ++inversions;
  }
  CHECK(inversions <= 1);

  auto full = verify::verify_eaas(sensitive_rep, sh);
  CHECK(rows.back().p_value == doctest::Approx(full.test.p_value)
                                   .epsilon(1e-12));

  // Clean suspect stays above lambda at every size.
  for (const auto& row :
       verify::probing_pair_sweep(identity_rep, sh, sizes)) {
    CHECK(row.p_value > 0.05);
  }

  CHECK_THROWS_AS(
      (void)verify::probing_pair_sweep(sensitive_rep, sh, {64}),
      std::invalid_argument);
}

TEST_CASE("report serialization") {
  auto sh = make_shadow(12, 4);
  auto report = verify::verify_mlaas(watermarked_conf, sh);
  const std::string base = "/tmp/encmark_verify_test";
  verify::write_report(report, base + ".json", base + "_pairs.csv");

  std::ifstream in(base + ".json");
  auto doc = nlohmann::json::parse(in);
  CHECK(doc["scenario"] == "mlaas");
  CHECK(doc["decision"] == "pirated");
  CHECK(doc["n_pairs"] == 12);
  CHECK(doc["tau"] == doctest::Approx(0.15));

  std::ifstream table(base + "_pairs.csv");
  std::string header;
  std::getline(table, header);
  CHECK(header == "pair,clean_value,paired_value,skipped");
}
