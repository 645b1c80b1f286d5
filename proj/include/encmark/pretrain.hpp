// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale SSL pretraining: a SimCLR-style contrastive trainer producing
// clean encoders, the negative-suspect factory (independently trained
// variants), and linear-probe / KNN evaluation.

#pragma once

#include "encmark/encoder.hpp"

#include <functional>
#include <string>
#include <vector>

namespace encmark::pretrain {

struct PretrainConfig {
  std::string dataset_id = "striped";
  int subset_size = 0;  // 0 = use the full dataset
  std::string architecture = "conv4:32x32x3:8,16,32,64:128";
  int batch_size = 64;
  double temperature = 0.5;
  data::AugmentConfig augment;
  int epochs = 15;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// NT-Xent loss over 2n views where rows i and i+n are the two views of
/// sample i. Returns the loss and its gradient w.r.t. the (unnormalized)
/// representations.
struct NtXent {
  double loss = 0.0;
  Matrix grad;
};
NtXent nt_xent_loss(const Matrix& reps, double temperature);

struct PretrainResult {
  EncoderHandle encoder;
  std::vector<double> epoch_loss;
  bool collapsed = false;  // representation variance fell below 1e-6
  std::uint64_t init_checksum = 0;  // parameters at initialization (lineage)
};

PretrainResult pretrain_simclr(const PretrainConfig& cfg,
                               const data::Dataset& ds);

/// True when every representation dimension has variance below 1e-6 — the
/// collapse condition that aborts pretraining.
bool representation_collapsed(const Matrix& reps);

/// Negative-suspect variants: v1 changes pretraining data only, v2 changes
/// hyperparameters only (temperature x2, learning rate x0.5 by default),
/// v3 changes only the training seed, v4 changes data and hyperparameters.
struct NegativeVariantSpec {
  enum class Variant { kV1, kV2, kV3, kV4 };
  Variant variant = Variant::kV3;
  std::uint64_t data_seed_delta = 1;
  std::uint64_t train_seed_delta = 1;  // v3 only
  double temperature_factor = 2.0;
  double learning_rate_factor = 0.5;
};

/// Regenerates pretraining data from a seed; used by v1/v4 variants.
using DatasetFactory = std::function<data::Dataset(std::uint64_t seed)>;

struct NegativeResult {
  EncoderHandle encoder;
  std::string variant_id;  // "neg-v1" .. "neg-v4"
  std::uint64_t init_checksum = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t train_seed = 0;
};

std::vector<NegativeResult> make_negatives(
    const PretrainConfig& base, std::uint64_t base_data_seed,
    const DatasetFactory& factory,
    const std::vector<NegativeVariantSpec>& specs);

/// Frozen-encoder linear-probe accuracy on the test split; with `knn` set,
/// cosine-similarity k-nearest-neighbors accuracy instead.
double linear_probe_accuracy(EncoderHandle& encoder,
                             const data::Dataset& train,
                             const data::Dataset& test, bool knn = false,
                             int knn_k = 5, int probe_epochs = 200,
                             double probe_lr = 0.5, std::uint64_t seed = 0);

}  // namespace encmark::pretrain
