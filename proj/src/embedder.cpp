// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/embedder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace encmark::embed {

namespace {

struct CosGrad {
  double value = 0.0;
  Vector da;
  Vector db;
};

CosGrad cosine_with_grad(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) {
    throw std::domain_error("cosine gradient: zero-norm representation");
  }
  CosGrad g;
  g.value = a.dot(b) / (na * nb);
  g.da = b / (na * nb) - (g.value / (na * na)) * a;
  g.db = a / (na * nb) - (g.value / (nb * nb)) * b;
  return g;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t step_seed(std::uint64_t base, int epoch, int step) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(epoch) << 20 |
                                      static_cast<std::uint64_t>(step)));
}

}  // namespace

LossGrad loss_ref(const Matrix& r_wm, const Matrix& r_ref) {
  if (r_wm.rows() != r_ref.rows() || r_wm.cols() != r_ref.cols()) {
    throw std::invalid_argument("loss_ref: shape mismatch");
  }
  const int n = static_cast<int>(r_wm.rows());
  LossGrad out;
  out.grad_a = Matrix::Zero(r_wm.rows(), r_wm.cols());
  double mean_cos = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto g = cosine_with_grad(r_wm.row(i), r_ref.row(i));
    mean_cos += g.value;
    out.grad_a.row(i) = -g.da.transpose() / n;
  }
  out.value = 1.0 - mean_cos / n;
  return out;
}

LossGrad loss_wm(const Matrix& r_clean, const Matrix& r_trig) {
  if (r_clean.rows() != r_trig.rows() || r_clean.cols() != r_trig.cols()) {
    throw std::invalid_argument("loss_wm: shape mismatch");
  }
  const int n = static_cast<int>(r_clean.rows());
  LossGrad out;
  out.grad_a = Matrix::Zero(r_clean.rows(), r_clean.cols());
  out.grad_b = Matrix::Zero(r_trig.rows(), r_trig.cols());
  for (int i = 0; i < n; ++i) {
    const auto g = cosine_with_grad(r_clean.row(i), r_trig.row(i));
    const double s = g.value > 0.0 ? 1.0 : (g.value < 0.0 ? -1.0 : 0.0);
    out.value += std::abs(g.value) / n;
    out.grad_a.row(i) = s * g.da.transpose() / n;
    out.grad_b.row(i) = s * g.db.transpose() / n;
  }
  return out;
}

LossGrad loss_entgl(const Matrix& r_trig, const shadow::AnchorSet& anchors) {
  if (anchors.num_anchors < 1 || anchors.anchors.cols() != r_trig.cols()) {
    throw std::invalid_argument("loss_entgl: anchor set inconsistent");
  }
  const int n = static_cast<int>(r_trig.rows());
  LossGrad out;
  out.grad_a = Matrix::Zero(r_trig.rows(), r_trig.cols());
  for (int i = 0; i < n; ++i) {
    const Vector anchor = anchors.anchors.row(anchors.assignment(i));
    const auto g = cosine_with_grad(r_trig.row(i), anchor);
    out.value += (1.0 - g.value) / n;
    out.grad_a.row(i) = -g.da.transpose() / n;
  }
  return out;
}

LossGrad loss_dis(const Matrix& r_clean, const Matrix& r_trig,
                  const stats::ProjectionSet& projections) {
  if (r_clean.rows() != r_trig.rows() || r_clean.cols() != r_trig.cols()) {
    throw std::invalid_argument("loss_dis: batch sizes must match");
  }
  const int n = static_cast<int>(r_clean.rows());
  const int num_dirs = static_cast<int>(projections.directions.rows());

  LossGrad out;
  out.value = stats::sliced_wasserstein(r_clean, r_trig, projections);
  out.grad_a = Matrix::Zero(r_clean.rows(), r_clean.cols());
  out.grad_b = Matrix::Zero(r_trig.rows(), r_trig.cols());
  if (out.value < 1e-12) return out;  // flat at coincident distributions

  const Matrix px = r_clean * projections.directions.transpose();
  const Matrix py = r_trig * projections.directions.transpose();
  std::vector<int> pu(n), pv(n);
  for (int j = 0; j < num_dirs; ++j) {
    std::iota(pu.begin(), pu.end(), 0);
    std::iota(pv.begin(), pv.end(), 0);
    std::sort(pu.begin(), pu.end(),
              [&](int a, int b) { return px(a, j) < px(b, j); });
    std::sort(pv.begin(), pv.end(),
              [&](int a, int b) { return py(a, j) < py(b, j); });
    for (int k = 0; k < n; ++k) {
      const double diff = px(pu[k], j) - py(pv[k], j);
      const double coef = diff / (out.value * num_dirs * n);
      out.grad_a.row(pu[k]) += coef * projections.directions.row(j);
      out.grad_b.row(pv[k]) -= coef * projections.directions.row(j);
    }
  }
  return out;
}

void WatermarkConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) {
    throw std::invalid_argument("WatermarkConfig: alpha/beta must be >= 0");
  }
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("WatermarkConfig: learning rate must be > 0");
  }
  if (warm_epochs < 0 || total_epochs < 0 || warm_epochs > total_epochs) {
    throw std::invalid_argument("WatermarkConfig: need 0 <= E <= total_epochs");
  }
  if (swd_directions <= 0 || num_anchors <= 0 || shadow_size <= 0 ||
      batch_size <= 0) {
    throw std::invalid_argument("WatermarkConfig: counts must be positive");
  }
}

void EmbeddingTrace::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,loss_ref,loss_wm,loss_entgl,loss_dis,loss_total,seconds\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << r.loss_ref << ',' << r.loss_wm << ','
        << r.loss_entgl << ',' << r.loss_dis << ',' << r.loss_total << ','
        << r.seconds << '\n';
  }
  if (aborted) out << "# aborted: " << abort_reason << '\n';
}

EmbedResult embed_watermark(const EncoderHandle& clean,
                            const data::Dataset& pretrain,
                            const shadow::ShadowDataset& shadow_set,
                            const shadow::AnchorSet& anchors,
                            const WatermarkConfig& cfg) {
  cfg.validate();
  if (shadow_set.size() == 0) {
    throw std::invalid_argument("embed_watermark: empty shadow dataset");
  }
  if (pretrain.images.empty()) {
    throw std::invalid_argument("embed_watermark: empty pretraining data");
  }

  EmbedResult result;
  result.encoder = clean;
  result.encoder.provenance = "watermarked";
  nn::Network ref_net = clean.network;  // frozen reference copy

  const Matrix shadow_clean = data::to_matrix(shadow_set.clean);
  const Matrix shadow_trig = data::to_matrix(shadow_set.triggered);
  const int n = static_cast<int>(pretrain.size());
  const int s = static_cast<int>(shadow_set.size());

  std::mt19937_64 rng(cfg.seed);
  nn::Sgd opt{cfg.learning_rate};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    const bool robust = epoch > cfg.warm_epochs;

    EpochRecord rec;
    rec.epoch = epoch;
    int steps = 0;
    for (int start = 0; start < n; start += cfg.batch_size, ++steps) {
      const int b = std::min(cfg.batch_size, n - start);
      std::vector<int> batch(order.begin() + start, order.begin() + start + b);
      const Matrix xb = data::to_matrix(pretrain, batch);

      nn::Network& net = result.encoder.network;
      const Matrix r_ref = ref_net.forward(xb);
      const Matrix r_b = net.forward(xb);
      const Matrix r_sc = net.forward(shadow_clean);
      const Matrix r_sw = net.forward(shadow_trig);

      const LossGrad l_ref = loss_ref(r_b, r_ref);
      const LossGrad l_wm = loss_wm(r_sc, r_sw);
      const LossGrad l_ent = loss_entgl(r_sw, anchors);
      const int m = std::min(b, s);
      const auto proj = stats::ProjectionSet::generate(
          cfg.swd_directions, static_cast<int>(r_b.cols()),
          step_seed(cfg.seed, epoch, steps));
      const LossGrad l_dis =
          loss_dis(r_b.topRows(m), r_sw.topRows(m), proj);

      const double total =
          l_ref.value + cfg.alpha * l_wm.value +
          (robust ? cfg.beta * (l_ent.value + l_dis.value) : 0.0);
      if (!std::isfinite(total)) {
        result.trace.aborted = true;
        result.trace.abort_reason =
            "non-finite loss at epoch " + std::to_string(epoch);
        result.trace.epochs.push_back(rec);
        return result;
      }

      rec.loss_ref += l_ref.value;
      rec.loss_wm += l_wm.value;
      rec.loss_entgl += l_ent.value;
      rec.loss_dis += l_dis.value;
      rec.loss_total += total;

      Matrix grad_batch = l_ref.grad_a;
      Matrix grad_sc = cfg.alpha * l_wm.grad_a;
      Matrix grad_sw = cfg.alpha * l_wm.grad_b;
      if (robust && cfg.beta > 0.0) {
        grad_batch.topRows(m) += cfg.beta * l_dis.grad_a;
        grad_sw += cfg.beta * l_ent.grad_a;
        grad_sw.topRows(m) += cfg.beta * l_dis.grad_b;
      }

      net.zero_grad();
      net.forward(xb);
      net.backward(grad_batch);
      net.forward(shadow_clean);
      net.backward(grad_sc);
      net.forward(shadow_trig);
      net.backward(grad_sw);
      opt.step(net);
    }

    const double inv = steps > 0 ? 1.0 / steps : 0.0;
    rec.loss_ref *= inv;
    rec.loss_wm *= inv;
    rec.loss_entgl *= inv;
    rec.loss_dis *= inv;
    rec.loss_total *= inv;
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.trace.epochs.push_back(rec);
  }
  return result;
}

EmbedResult embed_baseline_cluster(const EncoderHandle& clean,
                                   const shadow::ShadowDataset& shadow_set,
                                   const WatermarkConfig& cfg) {
  cfg.validate();
  if (shadow_set.size() == 0) {
    throw std::invalid_argument("embed_baseline_cluster: empty shadow dataset");
  }

  EmbedResult result;
  result.encoder = clean;
  result.encoder.provenance = "watermarked-baseline";
  nn::Network ref_net = clean.network;

  const Matrix shadow_clean = data::to_matrix(shadow_set.clean);
  const Matrix shadow_trig = data::to_matrix(shadow_set.triggered);
  const Matrix r_ref = ref_net.forward(shadow_clean);  // constant target
  const int n = static_cast<int>(shadow_set.size());

  nn::Sgd opt{cfg.learning_rate};
  for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    nn::Network& net = result.encoder.network;

    const Matrix r_sc = net.forward(shadow_clean);
    const Matrix r_sw = net.forward(shadow_trig);
    const LossGrad l_ref = loss_ref(r_sc, r_ref);

    // Pull every watermark representation toward the (stop-gradient) mean.
    const Vector center = r_sw.colwise().mean().transpose();
    LossGrad l_cluster;
    l_cluster.grad_a = Matrix::Zero(r_sw.rows(), r_sw.cols());
    for (int i = 0; i < n; ++i) {
      const auto g = cosine_with_grad(r_sw.row(i), center);
      l_cluster.value += (1.0 - g.value) / n;
      l_cluster.grad_a.row(i) = -g.da.transpose() / n;
    }

    const double total = l_ref.value + cfg.alpha * l_cluster.value;
    if (!std::isfinite(total)) {
      result.trace.aborted = true;
      result.trace.abort_reason =
          "non-finite loss at epoch " + std::to_string(epoch);
      return result;
    }

    net.zero_grad();
    net.forward(shadow_clean);
    net.backward(l_ref.grad_a);
    net.forward(shadow_trig);
    net.backward(cfg.alpha * l_cluster.grad_a);
    opt.step(net);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_ref = l_ref.value;
    rec.loss_wm = l_cluster.value;
    rec.loss_total = total;
    rec.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.trace.epochs.push_back(rec);
  }
  return result;
}

}  // namespace encmark::embed
