// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/pretrain.hpp"

#include "encmark/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace encmark::pretrain {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

void PretrainConfig::validate() const {
  require(batch_size >= 2, "PretrainConfig: batch_size must be >= 2");
  require(temperature > 0.0, "PretrainConfig: temperature must be > 0");
  require(epochs >= 0, "PretrainConfig: epochs must be >= 0");
  require(learning_rate > 0.0, "PretrainConfig: learning rate must be > 0");
  require(subset_size >= 0, "PretrainConfig: subset_size must be >= 0");
  require(!architecture.empty(), "PretrainConfig: architecture id required");
}

NtXent nt_xent_loss(const Matrix& reps, double temperature) {
  const int rows = static_cast<int>(reps.rows());
  require(rows >= 4 && rows % 2 == 0,
          "nt_xent_loss: need an even number of rows (>= 4)");
  require(temperature > 0.0, "nt_xent_loss: temperature must be > 0");
  const int n = rows / 2;

  // Normalize rows; the loss is over cosine similarities.
  Matrix unit(rows, reps.cols());
  Vector norms(rows);
  for (int i = 0; i < rows; ++i) {
    norms(i) = reps.row(i).norm();
    if (!(norms(i) > 0.0)) {
      throw std::runtime_error("nt_xent_loss: zero-norm representation");
    }
    unit.row(i) = reps.row(i) / norms(i);
  }

  const Matrix sims = (unit * unit.transpose()) / temperature;

  // dL/dS for ordered pairs (i, j), j != i: (p_ij - [j = positive]) / rows.
  Matrix dsim = Matrix::Zero(rows, rows);
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int pos = (i + n) % rows;
    double max_s = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < rows; ++k) {
      if (k != i) max_s = std::max(max_s, sims(i, k));
    }
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(sims(i, k) - max_s);
    }
    loss += (-sims(i, pos) + max_s + std::log(denom)) / rows;
    for (int k = 0; k < rows; ++k) {
      if (k == i) continue;
      const double p = std::exp(sims(i, k) - max_s) / denom;
      dsim(i, k) = (p - (k == pos ? 1.0 : 0.0)) / rows;
    }
  }

  // dL/du_i = sum_j (dsim_ij + dsim_ji) u_j / tau, then back through the
  // normalization: dL/dr_i = (g - (g . u) u) / ||r||.
  const Matrix dunit = (dsim + dsim.transpose()) * unit / temperature;
  NtXent out;
  out.loss = loss;
  out.grad.resize(rows, reps.cols());
  for (int i = 0; i < rows; ++i) {
    const double along = dunit.row(i).dot(unit.row(i));
    out.grad.row(i) = (dunit.row(i) - along * unit.row(i)) / norms(i);
  }
  return out;
}

bool representation_collapsed(const Matrix& reps) {
  if (reps.rows() < 2) return false;
  const Vector mean = reps.colwise().mean();
  double max_var = 0.0;
  for (int j = 0; j < reps.cols(); ++j) {
    const double var =
        (reps.col(j).array() - mean(j)).square().sum() / (reps.rows() - 1);
    max_var = std::max(max_var, var);
  }
  return max_var < 1e-6;
}

PretrainResult pretrain_simclr(const PretrainConfig& cfg,
                               const data::Dataset& ds) {
  cfg.validate();
  require(!ds.images.empty(), "pretrain_simclr: empty dataset");
  require(cfg.subset_size <= static_cast<int>(ds.size()),
          "pretrain_simclr: subset_size exceeds dataset size");

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> subset(ds.size());
  std::iota(subset.begin(), subset.end(), 0);
  std::shuffle(subset.begin(), subset.end(), rng);
  if (cfg.subset_size > 0) subset.resize(cfg.subset_size);

  PretrainResult result;
  result.encoder.network = make_network_from_architecture(cfg.architecture,
                                                          cfg.seed);
  result.encoder.architecture = cfg.architecture;
  result.encoder.dim = architecture_output_dim(cfg.architecture);
  result.encoder.provenance = "clean";
  result.init_checksum = result.encoder.network.checksum();

  nn::Sgd optimizer;
  optimizer.learning_rate = cfg.learning_rate;

  const int probe_n = std::min<int>(256, static_cast<int>(subset.size()));
  const auto collapse_probe = [&]() {
    std::vector<int> head(subset.begin(), subset.begin() + probe_n);
    return result.encoder.encode(data::to_matrix(ds, head));
  };

  std::vector<int> order = subset;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    int epoch_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const int b = std::min<int>(cfg.batch_size,
                                  static_cast<int>(order.size() - start));
      if (b < 2) break;  // a contrastive batch needs at least 2 samples
      std::vector<data::Image> views;
      views.reserve(2 * b);
      for (int v = 0; v < 2; ++v) {
        for (int i = 0; i < b; ++i) {
          views.push_back(
              data::augment(ds.images[order[start + i]], cfg.augment, rng));
        }
      }
      const Matrix reps = result.encoder.encode(data::to_matrix(views));
      const NtXent nt = nt_xent_loss(reps, cfg.temperature);
      result.encoder.network.zero_grad();
      result.encoder.network.backward(nt.grad);
      optimizer.step(result.encoder.network);
      epoch_sum += nt.loss * b;
      epoch_count += b;
    }
    result.epoch_loss.push_back(epoch_count > 0 ? epoch_sum / epoch_count
                                                : 0.0);
    if (representation_collapsed(collapse_probe())) {
      result.collapsed = true;
      return result;
    }
  }
  return result;
}

std::vector<NegativeResult> make_negatives(
    const PretrainConfig& base, std::uint64_t base_data_seed,
    const DatasetFactory& factory,
    const std::vector<NegativeVariantSpec>& specs) {
  require(static_cast<bool>(factory), "make_negatives: dataset factory required");
  std::vector<NegativeResult> out;
  out.reserve(specs.size());
  // Datasets are regenerated per seed and shared between variants that use
  // the same seed.
  std::map<std::uint64_t, data::Dataset> cache;
  const auto dataset_for = [&](std::uint64_t seed) -> const data::Dataset& {
    auto it = cache.find(seed);
    if (it == cache.end()) it = cache.emplace(seed, factory(seed)).first;
    return it->second;
  };

  for (const auto& spec : specs) {
    PretrainConfig cfg = base;
    std::uint64_t data_seed = base_data_seed;
    using V = NegativeVariantSpec::Variant;
    std::string id;
    switch (spec.variant) {
      case V::kV1:  // data only
        data_seed += spec.data_seed_delta;
        id = "neg-v1";
        break;
      case V::kV2:  // hyperparameters only
        cfg.temperature *= spec.temperature_factor;
        cfg.learning_rate *= spec.learning_rate_factor;
        id = "neg-v2";
        break;
      case V::kV3:  // fresh training seed only
        cfg.seed += spec.train_seed_delta;
        id = "neg-v3";
        break;
      case V::kV4:  // data and hyperparameters
        data_seed += spec.data_seed_delta;
        cfg.temperature *= spec.temperature_factor;
        cfg.learning_rate *= spec.learning_rate_factor;
        id = "neg-v4";
        break;
    }
    PretrainResult trained = pretrain_simclr(cfg, dataset_for(data_seed));
    if (trained.collapsed) {
      throw std::runtime_error("make_negatives: pretraining collapsed for " +
                               id);
    }
    NegativeResult neg;
    neg.encoder = std::move(trained.encoder);
    neg.variant_id = id;
    neg.init_checksum = trained.init_checksum;
    neg.data_seed = data_seed;
    neg.train_seed = cfg.seed;
    out.push_back(std::move(neg));
  }
  return out;
}

double linear_probe_accuracy(EncoderHandle& encoder,
                             const data::Dataset& train,
                             const data::Dataset& test, bool knn, int knn_k,
                             int probe_epochs, double probe_lr,
                             std::uint64_t seed) {
  require(!train.images.empty() && !test.images.empty(),
          "linear_probe_accuracy: empty split");
  require(train.labels.size() == train.images.size() &&
              test.labels.size() == test.images.size(),
          "linear_probe_accuracy: labeled data required");
  const int distinct = static_cast<int>(
      std::set<int>(train.labels.begin(), train.labels.end()).size());
  if (distinct < 2) {
    throw std::domain_error("linear_probe_accuracy: single-class data");
  }

  if (!knn) {
    adversary::DownstreamModel probe = adversary::transfer_downstream(
        encoder, train, probe_epochs, probe_lr, seed);
    return probe.accuracy(test);
  }

  require(knn_k >= 1, "linear_probe_accuracy: knn_k must be >= 1");
  Matrix train_reps = encoder.encode(data::to_matrix(train.images));
  Matrix test_reps = encoder.encode(data::to_matrix(test.images));
  for (int i = 0; i < train_reps.rows(); ++i) {
    const double n = train_reps.row(i).norm();
    if (n > 0.0) train_reps.row(i) /= n;
  }
  int correct = 0;
  const int k = std::min<int>(knn_k, static_cast<int>(train_reps.rows()));
  for (int i = 0; i < test_reps.rows(); ++i) {
    Vector q = test_reps.row(i);
    const double n = q.norm();
    if (n > 0.0) q /= n;
    const Vector sims = train_reps * q;
    std::vector<int> order(train_reps.rows());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        return sims(a) != sims(b) ? sims(a) > sims(b) : a < b;
                      });
    std::map<int, int> votes;
    for (int j = 0; j < k; ++j) ++votes[train.labels[order[j]]];
    int best_label = votes.begin()->first, best_count = votes.begin()->second;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {
        best_label = label;
        best_count = count;
      }
    }
    if (best_label == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / test_reps.rows();
}

}  // namespace encmark::pretrain
