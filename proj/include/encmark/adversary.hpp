// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Attack suite used to stress the watermark. Every attack copies its input
// model; the original is never mutated, and all attacks are deterministic
// given their seed.

#pragma once

#include "encmark/embedder.hpp"
#include "encmark/verifier.hpp"

#include <string>
#include <vector>

namespace encmark::adversary {

/// Frozen-or-finetuned encoder plus a linear softmax head.
struct DownstreamModel {
  EncoderHandle encoder;
  Matrix head_weights;  // [d x classes]
  Vector head_bias;     // [classes]
  std::string task_id;

  /// softmax(head * encoder(x)), one probability row per input row.
  Matrix predict(const Matrix& x);
  /// Fraction of correct top-1 predictions.
  double accuracy(const data::Dataset& ds);
  /// Black-box query adapter for the verifier.
  verify::SuspectMLaaS as_suspect();
};

/// Trains a linear head on the frozen encoder (the DT suspect).
DownstreamModel transfer_downstream(const EncoderHandle& encoder,
                                    const data::Dataset& task, int epochs,
                                    double learning_rate, std::uint64_t seed);

struct FinetuneResult {
  DownstreamModel model;
  int epochs_run = 0;
  bool diverged = false;
  std::vector<double> validation_loss;  // one entry per epoch
};

/// Full fine-tuning of encoder + head with SGD (learning rate eta, decoupled
/// weight decay), stopping on a 5-epoch validation-loss plateau or the cap.
FinetuneResult attack_finetune(const DownstreamModel& model,
                               const data::Dataset& task,
                               double eta = 1e-3, double decay = 1e-6,
                               int max_epochs = 100, int plateau_epochs = 5,
                               std::uint64_t seed = 0);

/// Global unstructured magnitude pruning over encoder parameters: the
/// floor(r * count) smallest-|w| entries (ties by index) are zeroed; the head
/// is untouched. r1 <= r2 yields nested zero sets by construction.
DownstreamModel attack_prune(const DownstreamModel& model, double r);

struct OverwriteResult {
  EncoderHandle encoder;
  double success_rate = 0.0;  // triggered aux samples pulled to the target
  bool reached_target = false;
  int epochs_run = 0;
};

/// Pseudo-watermark overwrite: pulls representations of triggered aux samples
/// toward the target class's representation center until the nearest-center
/// classification rate of triggered samples exceeds `success_target`.
OverwriteResult attack_overwrite(const EncoderHandle& encoder,
                                 const data::TriggerPattern& trigger,
                                 const data::Dataset& aux, int target_class,
                                 int max_epochs, double learning_rate,
                                 std::uint64_t seed,
                                 double success_target = 0.8);

/// Watermark unlearning: maximizes cosine(e(x), e(x + new_trigger)) over the
/// attacker's guessed clean samples.
EncoderHandle attack_unlearn(const EncoderHandle& encoder,
                             const std::vector<data::Image>& guessed_clean,
                             const data::TriggerPattern& new_trigger,
                             int epochs, double learning_rate,
                             std::uint64_t seed);

/// Adaptive removal: minimizes utility_term(aux) - psi * L_wm(true_shadow),
/// i.e. pushes shadow-pair cosine similarity back toward 1 while trying to
/// stay close to the pre-attack encoder on aux data.
EncoderHandle attack_adaptive_remove(const EncoderHandle& encoder,
                                     const shadow::ShadowDataset& true_shadow,
                                     double psi, const data::Dataset& aux,
                                     int epochs, double learning_rate,
                                     std::uint64_t seed);

/// Downstream-model persistence: encoder checkpoint plus head arrays.
void save_downstream(const DownstreamModel& model, const std::string& base_path);
DownstreamModel load_downstream(const std::string& base_path);

}  // namespace encmark::adversary
