// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Everything the watermark needs before training: source-class selection by
// unsupervised clustering over encoder representations, the shadow dataset of
// clean/triggered probing pairs, and the non-source-class anchor set.

#pragma once

#include "encmark/data.hpp"
#include "encmark/stats.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace encmark::shadow {

/// Batched representation map: one sample per row in, one row out.
using EncoderFn = std::function<Matrix(const Matrix&)>;

/// Outcome of clustering the pretraining data in representation space and
/// drawing one cluster as the watermark source class. Keeps the full
/// clustering around so anchors can be derived from the same partition.
struct ClusterSelection {
  int cluster_id = -1;
  std::vector<int> member_indices;  // dataset indices inside the source cluster
  std::vector<int> subsample;       // dataset indices that were clustered
  std::vector<int> assignments;     // cluster label per subsample entry
  Matrix centers;                   // [k x d]
  Matrix representations;           // [|subsample| x d]
  std::uint64_t seed = 0;
};

/// Clusters encoder representations of a uniform subsample (at most
/// `max_subsample` rows) with k-means and picks one nonempty cluster
/// uniformly at random. Clusters with fewer than `min_members` members are
/// skipped; if every cluster is a singleton the configuration is rejected.
ClusterSelection select_source_class(const EncoderFn& encoder,
                                     const data::Dataset& ds, int k_clusters,
                                     std::uint64_t seed,
                                     int max_subsample = 2000,
                                     int min_members = 2);

/// S clean/triggered probing pairs drawn from the source cluster.
struct ShadowDataset {
  std::vector<data::Image> clean;      // x_c, pair order
  std::vector<data::Image> triggered;  // x_wm = apply_trigger(x_c)
  std::vector<int> source_indices;     // dataset index behind each pair
  data::TriggerPattern trigger;
  int source_cluster_id = -1;
  std::uint64_t seed = 0;

  std::size_t size() const { return clean.size(); }
};

/// Picks the S source-cluster members nearest the cluster's representation
/// center (ties by dataset index) and pairs each with its triggered copy.
ShadowDataset build_shadow_dataset(const EncoderFn& encoder,
                                   const data::Dataset& ds,
                                   const ClusterSelection& selection,
                                   const data::TriggerPattern& trigger, int S,
                                   std::uint64_t seed);

/// A representation anchors taken from non-source clusters, plus the
/// sample->anchor assignment rule: round-robin (i mod A) by default, or an
/// explicit per-sample assignment when one has been computed.
struct AnchorSet {
  Matrix anchors;                    // [A x d]
  std::vector<int> source_samples;   // dataset index behind each anchor
  std::vector<int> anchor_clusters;  // cluster id behind each anchor
  std::vector<int> custom_assignment;  // optional; empty = round-robin
  int num_anchors = 0;
  std::uint64_t seed = 0;

  int assignment(int sample_index) const {
    if (custom_assignment.empty()) return sample_index % num_anchors;
    if (sample_index < 0 ||
        sample_index >= static_cast<int>(custom_assignment.size())) {
      throw std::out_of_range("AnchorSet::assignment: unassigned index");
    }
    return custom_assignment[sample_index];
  }
};

/// For A non-source clusters chosen uniformly at random from the seed, the
/// anchor is the representation of the member nearest that cluster's center.
AnchorSet compute_anchors(const ClusterSelection& selection, int A,
                          std::uint64_t seed);

/// Balanced nearest-anchor assignment: watermark representations claim
/// anchors in descending cosine-affinity order, each anchor capped at
/// ceil(n/A) samples. Content-aligned assignments entangle far more easily
/// than an arbitrary round-robin, which the encoder would have to memorize.
void assign_nearest_anchors(AnchorSet& anchors, const Matrix& wm_reps);

// ---------------------------------------------------------------------------
// Persistence: binary archive (bit-exact doubles) + JSON sidecar manifest.

void save_shadow_dataset(const ShadowDataset& shadow,
                         const std::string& archive_path,
                         const std::string& manifest_path);
ShadowDataset load_shadow_dataset(const std::string& archive_path,
                                  const std::string& manifest_path);

void save_anchor_set(const AnchorSet& anchors, const std::string& array_path,
                     const std::string& manifest_path);
AnchorSet load_anchor_set(const std::string& array_path,
                          const std::string& manifest_path);

}  // namespace encmark::shadow
