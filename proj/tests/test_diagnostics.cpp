// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "encmark/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

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

// Collapses every triggered image (footprint = 1) onto one direction while
// clean images stay spread out — the cluster-forcing failure mode.
Matrix clustering_encoder(const Matrix& x) {
  Matrix out(x.rows(), 3);
  for (int i = 0; i < x.rows(); ++i) {
    // Footprint pixels are the last two entries of rows 6 and 7.
    const double f = (x(i, 6 * 8 + 6) + x(i, 6 * 8 + 7) + x(i, 7 * 8 + 6) +
                      x(i, 7 * 8 + 7)) / 4.0;
    if (f > 0.99) {
      out.row(i) << 1.0, 0.01 * x(i, 0), 0.0;  // tight watermark cluster
    } else {
      out.row(i) << x(i, 0), x(i, 1), x(i, 2);  // spread clean cloud
    }
  }
  return out;
}

// Entangled encoder: trigger barely moves the representation.
Matrix entangled_encoder(const Matrix& x) {
  Matrix out(x.rows(), 3);
  for (int i = 0; i < x.rows(); ++i) {
    out.row(i) << x(i, 0), x(i, 1), x(i, 2);
  }
  return out;
}

}  // namespace

TEST_CASE("intra-watermark similarity separates the two regimes") {
  auto sh = make_shadow(20, 1);

  auto clustered = diag::intra_watermark_similarity(clustering_encoder, sh);
  CHECK(clustered.mean_pairwise_cos >= 0.95);
  CHECK(clustered.delta ==
        doctest::Approx(clustered.mean_pairwise_cos -
                        clustered.clean_reference_cos));
  CHECK(clustered.delta > 0.05);

  auto entangled = diag::intra_watermark_similarity(entangled_encoder, sh);
  CHECK(std::abs(entangled.delta) <= 0.05);

  SUBCASE("permutation invariance over shadow pairs") {
    auto permuted = sh;
    std::mt19937_64 rng(3);
    std::vector<int> order(sh.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
      permuted.clean[i] = sh.clean[order[i]];
      permuted.triggered[i] = sh.triggered[order[i]];
    }
    auto again = diag::intra_watermark_similarity(clustering_encoder, permuted);
    CHECK(again.mean_pairwise_cos ==
          doctest::Approx(clustered.mean_pairwise_cos).epsilon(1e-12));
    CHECK(again.clean_reference_cos ==
          doctest::Approx(clustered.clean_reference_cos).epsilon(1e-12));
  }
  SUBCASE("too-small shadow set rejected") {
    auto tiny = make_shadow(1, 2);
    CHECK_THROWS_AS(
        (void)diag::intra_watermark_similarity(clustering_encoder, tiny),
        std::invalid_argument);
  }
}

TEST_CASE("prediction bias statistics") {
  // Hand-built model: representation = 10 selected pixels, head = identity,
  // so argmax(prediction) = argmax over those pixels.
  const std::string arch = "mlp:16,10";
  EncoderHandle enc{make_network_from_architecture(arch, 1), arch, 10,
                    "clean"};
  Vector params = Vector::Zero(enc.network.param_count());
  for (int k = 0; k < 10; ++k) params(k * 16 + k) = 1.0;  // W(k, k) = 1
  enc.network.set_parameters(params);

  adversary::DownstreamModel model;
  model.encoder = enc;
  model.head_weights = Matrix::Identity(10, 10);
  model.head_bias = Vector::Zero(10);

  auto one_hot_image = [](int hot) {
    data::Image img(4, 4, 1);
    img.pixels[hot] = 1.0;
    return img;
  };

  SUBCASE("uniform predictions give mad = 0 and 1/k top fraction") {
    std::vector<data::Image> samples;
    for (int i = 0; i < 20; ++i) samples.push_back(one_hot_image(i % 10));
    auto stats = diag::prediction_bias(model, samples);
    CHECK(stats.mad == 0.0);
    CHECK(stats.top_class_fraction == doctest::Approx(0.1));
    int total = 0;
    for (int c : stats.class_histogram) total += c;
    CHECK(total == 20);
    CHECK(stats.top_class_fraction >= 1.0 / 10);
  }
  SUBCASE("constant predictions give top fraction 1") {
    std::vector<data::Image> samples(24, one_hot_image(4));
    auto stats = diag::prediction_bias(model, samples);
    CHECK(stats.top_class_fraction == doctest::Approx(1.0));
    CHECK(stats.class_histogram[4] == 24);
  }
  SUBCASE("biased-but-spread predictions give positive mad") {
    std::vector<data::Image> samples;
    for (int i = 0; i < 30; ++i) samples.push_back(one_hot_image(0));
    for (int i = 0; i < 6; ++i) samples.push_back(one_hot_image(1 + i % 4));
    auto stats = diag::prediction_bias(model, samples);
    CHECK(stats.mad > 0.0);
    CHECK(stats.top_class_fraction >= 0.8);
  }
  SUBCASE("fewer than 20 samples rejected") {
    std::vector<data::Image> samples(10, one_hot_image(0));
    CHECK_THROWS_AS((void)diag::prediction_bias(model, samples),
                    std::invalid_argument);
  }
}

TEST_CASE("PCA scatter export") {
  auto sh = make_shadow(30, 5);
  const std::string csv = "/tmp/encmark_scatter_test.csv";
  const std::string ppm = "/tmp/encmark_scatter_test.ppm";

  diag::export_pca_scatter(clustering_encoder, sh.clean, sh.triggered, csv,
                           ppm);

  // Reload and verify the geometric contrast: watermark points collapse.
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,y,label");
  std::vector<std::array<double, 2>> clean_pts, wm_pts;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string xs, ys, label;
    std::getline(ss, xs, ',');
    std::getline(ss, ys, ',');
    std::getline(ss, label, ',');
    if (label == "clean") {
      clean_pts.push_back({std::stod(xs), std::stod(ys)});
    } else {
      REQUIRE(label == "watermark");
      wm_pts.push_back({std::stod(xs), std::stod(ys)});
    }
  }
  REQUIRE(clean_pts.size() == 30);
  REQUIRE(wm_pts.size() == 30);

  auto mean_pairwise_dist = [](const std::vector<std::array<double, 2>>& p) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = i + 1; j < p.size(); ++j) {
        sum += std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]);
        ++n;
      }
    }
    return sum / n;
  };
  CHECK(mean_pairwise_dist(wm_pts) < 0.3 * mean_pairwise_dist(clean_pts));

  // The raster export is a valid PPM with the expected dimensions.
  std::ifstream img(ppm, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  img >> magic >> w >> h >> maxval;
  CHECK(magic == "P6");
  CHECK(w == 480);
  CHECK(h == 480);
  CHECK(maxval == 255);

  SUBCASE("empty watermark set still produces valid files") {
    diag::export_pca_scatter(clustering_encoder, sh.clean, {}, csv, ppm);
    std::ifstream in2(csv);
    std::string l;
    int rows = 0;
    std::getline(in2, l);
    CHECK(l == "x,y,label");
    while (std::getline(in2, l)) {
      CHECK(l.find("watermark") == std::string::npos);
      ++rows;
    }
    CHECK(rows == 30);
  }

  SUBCASE("entangled encoder: watermark hull overlaps the clean cloud") {
    diag::export_pca_scatter(entangled_encoder, sh.clean, sh.triggered, csv,
                             ppm);
    std::ifstream in2(csv);
    std::string l;
    std::getline(in2, l);
    std::vector<std::array<double, 2>> c2, w2;
    while (std::getline(in2, l)) {
      std::stringstream ss(l);
      std::string xs, ys, label;
      std::getline(ss, xs, ',');
      std::getline(ss, ys, ',');
      std::getline(ss, label, ',');
      (label == "clean" ? c2 : w2).push_back({std::stod(xs), std::stod(ys)});
    }
    // Bounding-box overlap as a hull-intersection proxy: the watermark box
    // must intersect the clean box with positive area.
    auto bbox = [](const std::vector<std::array<double, 2>>& p) {
      std::array<double, 4> box = {p[0][0], p[0][0], p[0][1], p[0][1]};
      for (const auto& q : p) {
        box[0] = std::min(box[0], q[0]);
        box[1] = std::max(box[1], q[0]);
        box[2] = std::min(box[2], q[1]);
        box[3] = std::max(box[3], q[1]);
      }
      return box;
    };
    const auto cb = bbox(c2), wb = bbox(w2);
    const double ox = std::min(cb[1], wb[1]) - std::max(cb[0], wb[0]);
    const double oy = std::min(cb[3], wb[3]) - std::max(cb[2], wb[2]);
    CHECK(ox > 0.0);
    CHECK(oy > 0.0);
  }
}
