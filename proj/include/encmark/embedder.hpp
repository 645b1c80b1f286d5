// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Watermark embedding: fine-tunes a copy of the clean encoder under
// L_total = L_ref + alpha*L_wm + beta*(L_entgl + L_dis) with a warm-up phase
// that optimizes only the first two terms. Also provides the naive
// cluster-forcing baseline watermark used for the diagnostics contrast.
//
// Loss functions are expressed over representation batches and return
// analytic gradients with respect to those representations; the trainer
// chains them through the network's backward pass.

#pragma once

#include "encmark/encoder.hpp"

#include <optional>
#include <string>
#include <vector>

namespace encmark::embed {

/// Loss value plus gradients w.r.t. the representation batches it consumed.
/// Gradients are zero-size when the corresponding input is a constant.
struct LossGrad {
  double value = 0.0;
  Matrix grad_a;
  Matrix grad_b;
};

/// 1 - mean cosine(r_wm_i, r_ref_i). The reference representations are
/// constants (no gradient flows into the clean encoder).
LossGrad loss_ref(const Matrix& r_wm, const Matrix& r_ref);

/// mean |cosine(r_clean_i, r_trig_i)| over shadow pairs, both sides through
/// the watermarked encoder. grad_a is w.r.t. r_clean, grad_b w.r.t. r_trig.
LossGrad loss_wm(const Matrix& r_clean, const Matrix& r_trig);

/// mean (1 - cosine(r_trig_i, anchor[assignment(i)])); anchors are
/// constants. The assignment rule lives in the AnchorSet (round-robin by
/// default, or an explicit per-sample assignment).
LossGrad loss_entgl(const Matrix& r_trig, const shadow::AnchorSet& anchors);

/// Sliced Wasserstein distance between clean-batch and watermark-batch
/// representations (both through the watermarked encoder). Matches
/// stats::sliced_wasserstein exactly; requires equal batch sizes.
LossGrad loss_dis(const Matrix& r_clean, const Matrix& r_trig,
                  const stats::ProjectionSet& projections);

struct WatermarkConfig {
  double alpha = 1.0;
  double beta = 1.0;
  int warm_epochs = 5;
  int total_epochs = 30;
  double learning_rate = 1e-3;
  int swd_directions = 64;  // J
  int num_anchors = 4;      // A
  int shadow_size = 200;    // S
  int batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument on violation
};

struct EpochRecord {
  int epoch = 0;
  double loss_ref = 0.0;
  double loss_wm = 0.0;
  double loss_entgl = 0.0;
  double loss_dis = 0.0;
  double loss_total = 0.0;
  double seconds = 0.0;
};

struct EmbeddingTrace {
  std::vector<EpochRecord> epochs;
  bool aborted = false;
  std::string abort_reason;

  void write_csv(const std::string& path) const;
};

struct EmbedResult {
  EncoderHandle encoder;
  EmbeddingTrace trace;
};

/// Algorithm: e_wm starts as a copy of e_c; epochs <= warm_epochs optimize
/// L_ref + alpha*L_wm, later epochs add beta*(L_entgl + L_dis). Plain SGD
/// with fixed learning rate; e_c is never mutated. The SWD projection set is
/// resampled each step from a (seed, epoch, step)-derived stream so warm-up
/// parameter updates are invariant to (anchors, J, beta).
EmbedResult embed_watermark(const EncoderHandle& clean,
                            const data::Dataset& pretrain,
                            const shadow::ShadowDataset& shadow_set,
                            const shadow::AnchorSet& anchors,
                            const WatermarkConfig& cfg);

/// Naive cluster-forcing baseline: pulls watermark-sample representations
/// toward their running mean (maximizing intra-watermark cosine) while
/// keeping the clean shadow samples aligned with the clean encoder.
EmbedResult embed_baseline_cluster(const EncoderHandle& clean,
                                   const shadow::ShadowDataset& shadow_set,
                                   const WatermarkConfig& cfg);

}  // namespace encmark::embed
