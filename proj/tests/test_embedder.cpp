// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "encmark/embedder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

using namespace encmark;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  }
  return m;
}

double cos_rows(const Matrix& a, const Matrix& b, int i) {
  return stats::cosine_similarity(a.row(i), b.row(i));
}

// Central-difference gradient of `f` with respect to entries of `x`.
template <typename F>
Matrix fd_grad(F f, Matrix x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = f(x);
      x(i, j) = orig - h;
      const double down = f(x);
      x(i, j) = orig;
      g(i, j) = (up - down) / (2 * h);
    }
  }
  return g;
}

void check_close(const Matrix& a, const Matrix& b, double rel = 1e-4) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  const double scale = std::max(1e-8, std::max(a.norm(), b.norm()));
  CHECK((a - b).norm() / scale < rel);
}

data::Dataset tiny_blob_dataset(int per_blob, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  data::Dataset ds;
  ds.num_classes = 2;
  for (int i = 0; i < 2 * per_blob; ++i) {
    const int label = i % 2;
    data::Image img(4, 4, 1);
    for (double& p : img.pixels) {
      p = std::clamp((label ? 0.8 : 0.2) + noise(rng), 0.0, 1.0);
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

shadow::ShadowDataset tiny_shadow(const data::Dataset& ds, int s) {
  data::TriggerPattern trig;
  trig.patch = data::Image(2, 2, 1);
  std::fill(trig.patch.pixels.begin(), trig.patch.pixels.end(), 1.0);
  trig.row = 2;
  trig.col = 2;
  trig.blend = 1.0;

  shadow::ShadowDataset sh;
  sh.trigger = trig;
  sh.seed = 1;
  for (int i = 0; i < s; ++i) {
    sh.clean.push_back(ds.images[2 * i]);  // label-0 blob as the source class
    sh.triggered.push_back(data::apply_trigger(ds.images[2 * i], trig));
    sh.source_indices.push_back(2 * i);
  }
  return sh;
}

shadow::AnchorSet tiny_anchors(int a, int d, std::uint64_t seed) {
  shadow::AnchorSet set;
  set.num_anchors = a;
  set.anchors = random_matrix(a, d, seed);
  for (int i = 0; i < a; ++i) {
    set.source_samples.push_back(i);
    set.anchor_clusters.push_back(i + 1);
  }
  return set;
}

}  // namespace

TEST_CASE("loss_ref values and gradient") {
  Matrix r = random_matrix(6, 5, 1);
  SUBCASE("identical representations give zero") {
    CHECK(embed::loss_ref(r, r).value == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("antipodal representations give two") {
    CHECK(embed::loss_ref(-r, r).value == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("matches explicit cosine-mean oracle") {
    Matrix q = random_matrix(6, 5, 2);
    double oracle = 0.0;
    for (int i = 0; i < 6; ++i) oracle += cos_rows(q, r, i);
    CHECK(embed::loss_ref(q, r).value ==
          doctest::Approx(1.0 - oracle / 6).epsilon(1e-10));
  }
  SUBCASE("gradient matches finite differences") {
    Matrix q = random_matrix(6, 5, 2);
    auto lg = embed::loss_ref(q, r);
    check_close(lg.grad_a, fd_grad([&](const Matrix& m) {
                  return embed::loss_ref(m, r).value;
                }, q));
  }
  SUBCASE("zero-norm representation is a domain error") {
    Matrix q = r;
    q.row(0).setZero();
    CHECK_THROWS_AS((void)embed::loss_ref(q, r), std::domain_error);
  }
}

TEST_CASE("loss_wm values and gradients") {
  Matrix rc = random_matrix(5, 4, 3);
  SUBCASE("orthogonal pairs give zero, identical pairs give one") {
    Matrix a(2, 2), b(2, 2);
    a << 1, 0, 0, 1;
    b << 0, 1, 1, 0;
    CHECK(embed::loss_wm(a, b).value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(embed::loss_wm(rc, rc).value == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("matches per-pair |cos| oracle and finite differences") {
    Matrix rw = random_matrix(5, 4, 4);
    double oracle = 0.0;
    for (int i = 0; i < 5; ++i) oracle += std::abs(cos_rows(rc, rw, i));
    auto lg = embed::loss_wm(rc, rw);
    CHECK(lg.value == doctest::Approx(oracle / 5).epsilon(1e-10));
    check_close(lg.grad_a, fd_grad([&](const Matrix& m) {
                  return embed::loss_wm(m, rw).value;
                }, rc));
    check_close(lg.grad_b, fd_grad([&](const Matrix& m) {
                  return embed::loss_wm(rc, m).value;
                }, rw));
  }
}

TEST_CASE("loss_entgl values and gradient") {
  auto anchors = tiny_anchors(2, 4, 7);
  SUBCASE("representations equal to their anchors give zero") {
    Matrix r(4, 4);
    for (int i = 0; i < 4; ++i) r.row(i) = anchors.anchors.row(i % 2);
    CHECK(embed::loss_entgl(r, anchors).value ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(embed::loss_entgl(-r, anchors).value ==
          doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("matches per-sample oracle and finite differences") {
    Matrix r = random_matrix(6, 4, 8);
    double oracle = 0.0;
    for (int i = 0; i < 6; ++i) {
      oracle += 1.0 - stats::cosine_similarity(
                          r.row(i), anchors.anchors.row(i % 2));
    }
    auto lg = embed::loss_entgl(r, anchors);
    CHECK(lg.value == doctest::Approx(oracle / 6).epsilon(1e-10));
    check_close(lg.grad_a, fd_grad([&](const Matrix& m) {
                  return embed::loss_entgl(m, anchors).value;
                }, r));
  }
  SUBCASE("explicit assignments override round-robin") {
    Matrix r = random_matrix(4, 4, 9);
    auto custom = anchors;
    custom.custom_assignment = {1, 1, 0, 1};
    double oracle = 0.0;
    for (int i = 0; i < 4; ++i) {
      oracle += 1.0 - stats::cosine_similarity(
                          r.row(i),
                          custom.anchors.row(custom.custom_assignment[i]));
    }
    auto lg = embed::loss_entgl(r, custom);
    CHECK(lg.value == doctest::Approx(oracle / 4).epsilon(1e-10));
    check_close(lg.grad_a, fd_grad([&](const Matrix& m) {
                  return embed::loss_entgl(m, custom).value;
                }, r));
  }
  SUBCASE("an assignment that does not cover the batch is an error") {
    Matrix r = random_matrix(4, 4, 9);
    auto custom = anchors;
    custom.custom_assignment = {1, 0};  // only two of four rows covered
    CHECK_THROWS_AS((void)embed::loss_entgl(r, custom), std::out_of_range);
  }
}

TEST_CASE("loss_dis values and gradients") {
  SUBCASE("identical batches give zero") {
    Matrix r = random_matrix(8, 3, 9);
    auto p = stats::ProjectionSet::generate(16, 3, 1);
    CHECK(embed::loss_dis(r, r, p).value == doctest::Approx(0.0));
  }
  SUBCASE("1-D point masses at distance one give one") {
    Matrix a = Matrix::Zero(5, 1);
    Matrix b = Matrix::Ones(5, 1);
    stats::ProjectionSet p;
    p.directions = Matrix::Ones(1, 1);
    CHECK(embed::loss_dis(a, b, p).value == doctest::Approx(1.0));
  }
  SUBCASE("matches tensor-stats SWD and finite differences") {
    Matrix a = random_matrix(7, 4, 10);
    Matrix b = random_matrix(7, 4, 11);
    auto p = stats::ProjectionSet::generate(12, 4, 2);
    auto lg = embed::loss_dis(a, b, p);
    CHECK(lg.value == doctest::Approx(stats::sliced_wasserstein(a, b, p))
                          .epsilon(1e-10));
    check_close(lg.grad_a, fd_grad([&](const Matrix& m) {
                  return embed::loss_dis(m, b, p).value;
                }, a));
    check_close(lg.grad_b, fd_grad([&](const Matrix& m) {
                  return embed::loss_dis(a, m, p).value;
                }, b));
  }
}

TEST_CASE("combined loss gradient through a tiny encoder") {
  // mlp:16,6,4 has 16*6+6 + 6*4+4 = 130 parameters.
  const std::string arch = "mlp:16,6,4";
  nn::Network net = make_network_from_architecture(arch, 3);
  nn::Network ref = make_network_from_architecture(arch, 4);
  REQUIRE(net.param_count() <= 200);

  Matrix xb = random_matrix(5, 16, 20);
  Matrix xc = random_matrix(4, 16, 21);
  Matrix xw = random_matrix(4, 16, 22);
  auto anchors = tiny_anchors(2, 4, 23);
  auto proj = stats::ProjectionSet::generate(8, 4, 24);
  const double alpha = 0.7, beta = 0.9;

  auto total = [&](nn::Network& w) {
    Matrix rr = ref.forward(xb);
    Matrix rb = w.forward(xb);
    Matrix rc = w.forward(xc);
    Matrix rw = w.forward(xw);
    const int m = static_cast<int>(std::min(rb.rows(), rw.rows()));
    return embed::loss_ref(rb, rr).value +
           alpha * embed::loss_wm(rc, rw).value +
           beta * (embed::loss_entgl(rw, anchors).value +
                   embed::loss_dis(rb.topRows(m), rw.topRows(m), proj).value);
  };

  // Analytic: chain representation gradients through the network backward
  // pass exactly the way the trainer does.
  Matrix rr = ref.forward(xb);
  Matrix rb = net.forward(xb);
  Matrix rc = net.forward(xc);
  Matrix rw = net.forward(xw);
  const int m = static_cast<int>(std::min(rb.rows(), rw.rows()));
  auto l_ref = embed::loss_ref(rb, rr);
  auto l_wm = embed::loss_wm(rc, rw);
  auto l_ent = embed::loss_entgl(rw, anchors);
  auto l_dis = embed::loss_dis(rb.topRows(m), rw.topRows(m), proj);

  Matrix gb = l_ref.grad_a;
  gb.topRows(m) += beta * l_dis.grad_a;
  Matrix gc = alpha * l_wm.grad_a;
  Matrix gw = alpha * l_wm.grad_b + beta * l_ent.grad_a;
  gw.topRows(m) += beta * l_dis.grad_b;

  net.zero_grad();
  net.forward(xb);
  net.backward(gb);
  net.forward(xc);
  net.backward(gc);
  net.forward(xw);
  net.backward(gw);
  Vector analytic = net.gradients();

  // Finite differences over every parameter.
  const Vector theta = net.parameters();
  Vector numeric(theta.size());
  const double h = 1e-6;
  for (int i = 0; i < theta.size(); ++i) {
    Vector t = theta;
    t(i) = theta(i) + h;
    net.set_parameters(t);
    const double up = total(net);
    t(i) = theta(i) - h;
    net.set_parameters(t);
    const double down = total(net);
    numeric(i) = (up - down) / (2 * h);
  }
  net.set_parameters(theta);

  CHECK((analytic - numeric).norm() /
            std::max(1e-8, numeric.norm()) < 1e-4);
}

TEST_CASE("embed_watermark contracts") {
  auto ds = tiny_blob_dataset(16, 1);
  auto sh = tiny_shadow(ds, 8);
  const std::string arch = "mlp:16,12,6";
  EncoderHandle clean{make_network_from_architecture(arch, 15), arch, 6,
                      "clean"};
  auto anchors = tiny_anchors(2, 6, 6);

  embed::WatermarkConfig cfg;
  cfg.warm_epochs = 1;
  cfg.total_epochs = 3;
  cfg.swd_directions = 8;
  cfg.num_anchors = 2;
  cfg.shadow_size = 8;
  cfg.batch_size = 8;
  cfg.seed = 42;

  SUBCASE("zero epochs is the identity") {
    auto z = cfg;
    z.warm_epochs = 0;
    z.total_epochs = 0;
    auto res = embed::embed_watermark(clean, ds, sh, anchors, z);
    CHECK(res.encoder.network.checksum() == clean.network.checksum());
    CHECK(res.encoder.provenance == "watermarked");
  }
  SUBCASE("the clean encoder is never mutated, runs are deterministic") {
    const auto before = clean.network.checksum();
    auto r1 = embed::embed_watermark(clean, ds, sh, anchors, cfg);
    auto r2 = embed::embed_watermark(clean, ds, sh, anchors, cfg);
    CHECK(clean.network.checksum() == before);
    CHECK(r1.encoder.network.checksum() == r2.encoder.network.checksum());
    CHECK(r1.encoder.network.checksum() != before);
    CHECK(r1.trace.epochs.size() == 3);
    for (const auto& rec : r1.trace.epochs) {
      CHECK(std::isfinite(rec.loss_total));
    }
  }
  SUBCASE("warm-phase updates ignore anchors, J, and beta") {
    auto warm = cfg;
    warm.warm_epochs = 2;
    warm.total_epochs = 2;
    auto other = warm;
    other.swd_directions = 32;
    other.beta = 9.0;
    auto other_anchors = tiny_anchors(2, 6, 99);
    auto r1 = embed::embed_watermark(clean, ds, sh, anchors, warm);
    auto r2 = embed::embed_watermark(clean, ds, sh, other_anchors, other);
    CHECK(r1.encoder.network.checksum() == r2.encoder.network.checksum());
  }
  SUBCASE("beta = 0 matches an all-warm run") {
    auto no_beta = cfg;
    no_beta.warm_epochs = 0;
    no_beta.beta = 0.0;
    auto all_warm = cfg;
    all_warm.warm_epochs = cfg.total_epochs;
    all_warm.beta = 5.0;
    auto r1 = embed::embed_watermark(clean, ds, sh, anchors, no_beta);
    auto r2 = embed::embed_watermark(clean, ds, sh, anchors, all_warm);
    CHECK(r1.encoder.network.checksum() == r2.encoder.network.checksum());
    // The skipped terms are still reported in the trace.
    CHECK(r1.trace.epochs[0].loss_entgl > 0.0);
  }
  SUBCASE("invalid config is rejected") {
    auto bad = cfg;
    bad.warm_epochs = 10;
    CHECK_THROWS_AS(
        (void)embed::embed_watermark(clean, ds, sh, anchors, bad),
        std::invalid_argument);
  }
}

TEST_CASE("baseline cluster embedding raises intra-watermark cosine") {
  auto ds = tiny_blob_dataset(16, 2);
  auto sh = tiny_shadow(ds, 8);
  const std::string arch = "mlp:16,12,6";
  EncoderHandle clean{make_network_from_architecture(arch, 17), arch, 6,
                      "clean"};

  embed::WatermarkConfig cfg;
  cfg.total_epochs = 0;
  cfg.warm_epochs = 0;
  auto identity = embed::embed_baseline_cluster(clean, sh, cfg);
  CHECK(identity.encoder.network.checksum() == clean.network.checksum());

  auto intra_cos = [&](EncoderHandle& h) {
    Matrix r = h.encode(data::to_matrix(sh.triggered));
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < r.rows(); ++i) {
      for (int j = i + 1; j < r.rows(); ++j) {
        sum += stats::cosine_similarity(r.row(i), r.row(j));
        ++count;
      }
    }
    return sum / count;
  };

  EncoderHandle probe = clean;
  const double before = intra_cos(probe);
  cfg.total_epochs = 150;
  cfg.learning_rate = 0.05;
  auto res = embed::embed_baseline_cluster(clean, sh, cfg);
  CHECK(res.encoder.provenance == "watermarked-baseline");
  const double after = intra_cos(res.encoder);
  CHECK(after > before);
  CHECK(after > 0.9);
}

TEST_CASE("encoder checkpoints round-trip") {
  const std::string arch = "conv4:16x16x1:2,4,4,8:6";
  EncoderHandle enc{make_network_from_architecture(arch, 11), arch, 6,
                    "clean"};
  const std::string base = "/tmp/encmark_encoder_test";
  save_encoder(enc, base + ".bin", base + ".json", "cfg123");
  auto back = load_encoder(base + ".bin", base + ".json");
  CHECK(back.architecture == arch);
  CHECK(back.dim == 6);
  CHECK(back.provenance == "clean");
  CHECK(back.network.checksum() == enc.network.checksum());

  Matrix x = random_matrix(2, 16 * 16, 12).cwiseAbs();
  CHECK((back.encode(x) - enc.encode(x)).norm() == 0.0);

  CHECK_THROWS_AS((void)load_encoder("/nonexistent", base + ".json"),
                  std::runtime_error);
  CHECK_THROWS_AS((void)make_network_from_architecture("resnet:50", 1),
                  std::invalid_argument);
}

TEST_CASE("trace CSV serialization") {
  embed::EmbeddingTrace trace;
  trace.epochs.push_back({1, 0.5, 0.9, 1.0, 0.2, 2.6, 0.01});
  const std::string path = "/tmp/encmark_trace_test.csv";
  trace.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,loss_ref,loss_wm,loss_entgl,loss_dis,loss_total,seconds");
  std::string row;
  std::getline(in, row);
  CHECK(row.rfind("1,0.5,0.9,1,0.2,2.6,", 0) == 0);
}
