// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/shadow.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace encmark::shadow {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::vector<int> uniform_subsample_indices(int n, int limit,
                                           std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= limit) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

int nearest_row_to(const Matrix& rows, const std::vector<int>& candidates,
                   const Vector& target) {
  int best = -1;
  double best_d = 0.0;
  for (int c : candidates) {
    const double d = (rows.row(c).transpose() - target).squaredNorm();
    if (best < 0 || d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

void write_image(std::ofstream& out, const data::Image& img) {
  const std::int32_t dims[3] = {img.height, img.width, img.channels};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * sizeof(double)));
}

data::Image read_image(std::ifstream& in) {
  std::int32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw std::runtime_error("shadow archive: corrupt image header");
  }
  data::Image img(dims[0], dims[1], dims[2]);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * sizeof(double)));
  if (!in) throw std::runtime_error("shadow archive: truncated image data");
  return img;
}

}  // namespace

ClusterSelection select_source_class(const EncoderFn& encoder,
                                     const data::Dataset& ds, int k_clusters,
                                     std::uint64_t seed, int max_subsample,
                                     int min_members) {
  require(k_clusters >= 2, "select_source_class: k_clusters must be >= 2");
  require(!ds.images.empty(), "select_source_class: empty dataset");

  ClusterSelection sel;
  sel.seed = seed;
  sel.subsample = uniform_subsample_indices(static_cast<int>(ds.size()),
                                            max_subsample, seed);
  sel.representations = encoder(data::to_matrix(ds, sel.subsample));
  require(sel.representations.rows() ==
              static_cast<long>(sel.subsample.size()),
          "select_source_class: encoder changed the row count");

  auto km = stats::kmeans(sel.representations, k_clusters, seed);
  sel.centers = std::move(km.centers);
  sel.assignments = std::move(km.labels);

  std::vector<int> counts(k_clusters, 0);
  for (int a : sel.assignments) ++counts[a];
  std::vector<int> eligible;
  for (int c = 0; c < k_clusters; ++c) {
    if (counts[c] >= min_members) eligible.push_back(c);
  }
  if (eligible.empty()) {
    throw std::invalid_argument(
        "select_source_class: every cluster is smaller than min_members "
        "(all-singleton clustering)");
  }

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  sel.cluster_id = eligible[pick(rng)];
  for (std::size_t i = 0; i < sel.subsample.size(); ++i) {
    if (sel.assignments[i] == sel.cluster_id) {
      sel.member_indices.push_back(sel.subsample[i]);
    }
  }
  return sel;
}

ShadowDataset build_shadow_dataset(const EncoderFn& encoder,
                                   const data::Dataset& ds,
                                   const ClusterSelection& selection,
                                   const data::TriggerPattern& trigger, int S,
                                   std::uint64_t seed) {
  require(S > 0, "build_shadow_dataset: S must be positive");
  if (S > static_cast<int>(selection.member_indices.size())) {
    throw std::domain_error(
        "build_shadow_dataset: S exceeds the source-cluster member count");
  }

  const Matrix reps = encoder(data::to_matrix(ds, selection.member_indices));
  const Vector center = reps.colwise().mean().transpose();

  // Order members nearest-to-center first; ties break by dataset index.
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(selection.member_indices.size());
  for (long i = 0; i < reps.rows(); ++i) {
    ranked.emplace_back((reps.row(i).transpose() - center).squaredNorm(),
                        selection.member_indices[i]);
  }
  std::sort(ranked.begin(), ranked.end());

  ShadowDataset shadow;
  shadow.trigger = trigger;
  shadow.source_cluster_id = selection.cluster_id;
  shadow.seed = seed;
  for (int i = 0; i < S; ++i) {
    const int idx = ranked[i].second;
    shadow.source_indices.push_back(idx);
    shadow.clean.push_back(ds.images[idx]);
    shadow.triggered.push_back(data::apply_trigger(ds.images[idx], trigger));
  }
  return shadow;
}

AnchorSet compute_anchors(const ClusterSelection& selection, int A,
                          std::uint64_t seed) {
  require(A >= 1, "compute_anchors: A must be >= 1");
  const int k = static_cast<int>(selection.centers.rows());

  // Members per non-source cluster (positions into the subsample).
  std::vector<std::vector<int>> members(k);
  for (std::size_t i = 0; i < selection.assignments.size(); ++i) {
    members[selection.assignments[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> candidates;
  for (int c = 0; c < k; ++c) {
    if (c != selection.cluster_id && !members[c].empty()) candidates.push_back(c);
  }
  if (static_cast<int>(candidates.size()) < A) {
    throw std::domain_error(
        "compute_anchors: fewer than A nonempty non-source clusters");
  }

  std::mt19937_64 rng(seed ^ 0xda3e39cb94b95bdbull);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(A);
  std::sort(candidates.begin(), candidates.end());

  AnchorSet anchors;
  anchors.num_anchors = A;
  anchors.seed = seed;
  anchors.anchors.resize(A, selection.representations.cols());
  for (int a = 0; a < A; ++a) {
    const int cluster = candidates[a];
    const int pos = nearest_row_to(selection.representations, members[cluster],
                                   selection.centers.row(cluster).transpose());
    anchors.anchors.row(a) = selection.representations.row(pos);
    anchors.source_samples.push_back(selection.subsample[pos]);
    anchors.anchor_clusters.push_back(cluster);
  }
  return anchors;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
constexpr char kShadowMagic[8] = {'E', 'N', 'C', 'S', 'H', 'D', 'W', '1'};
constexpr char kAnchorMagic[8] = {'E', 'N', 'C', 'A', 'N', 'C', 'H', '1'};
}  // namespace

void save_shadow_dataset(const ShadowDataset& shadow,
                         const std::string& archive_path,
                         const std::string& manifest_path) {
  std::ofstream out(archive_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + archive_path);
  out.write(kShadowMagic, sizeof(kShadowMagic));
  const std::int32_t n = static_cast<std::int32_t>(shadow.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  write_image(out, shadow.trigger.patch);
  for (std::int32_t i = 0; i < n; ++i) {
    write_image(out, shadow.clean[i]);
    write_image(out, shadow.triggered[i]);
  }
  if (!out) throw std::runtime_error("write failed: " + archive_path);

  json manifest;
  manifest["format"] = "encmark-shadow-v1";
  manifest["pairs"] = n;
  manifest["seed"] = shadow.seed;
  manifest["source_cluster_id"] = shadow.source_cluster_id;
  manifest["pair_ordering"] = shadow.source_indices;
  manifest["trigger"] = {{"row", shadow.trigger.row},
                         {"col", shadow.trigger.col},
                         {"blend", shadow.trigger.blend},
                         {"patch_height", shadow.trigger.patch.height},
                         {"patch_width", shadow.trigger.patch.width}};
  std::ofstream mout(manifest_path);
  if (!mout) throw std::runtime_error("cannot write " + manifest_path);
  mout << manifest.dump(2) << '\n';
}

ShadowDataset load_shadow_dataset(const std::string& archive_path,
                                  const std::string& manifest_path) {
  std::ifstream in(archive_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + archive_path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kShadowMagic)) {
    throw std::runtime_error("not a shadow archive: " + archive_path);
  }
  std::int32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n < 0) throw std::runtime_error("corrupt shadow archive header");

  ShadowDataset shadow;
  shadow.trigger.patch = read_image(in);
  for (std::int32_t i = 0; i < n; ++i) {
    shadow.clean.push_back(read_image(in));
    shadow.triggered.push_back(read_image(in));
  }

  std::ifstream min(manifest_path);
  if (!min) throw std::runtime_error("cannot open " + manifest_path);
  json manifest = json::parse(min);
  if (manifest.value("format", "") != "encmark-shadow-v1") {
    throw std::runtime_error("unexpected shadow manifest format");
  }
  shadow.seed = manifest.at("seed").get<std::uint64_t>();
  shadow.source_cluster_id = manifest.at("source_cluster_id").get<int>();
  shadow.source_indices =
      manifest.at("pair_ordering").get<std::vector<int>>();
  shadow.trigger.row = manifest.at("trigger").at("row").get<int>();
  shadow.trigger.col = manifest.at("trigger").at("col").get<int>();
  shadow.trigger.blend = manifest.at("trigger").at("blend").get<double>();
  if (static_cast<std::int32_t>(shadow.source_indices.size()) != n) {
    throw std::runtime_error("shadow manifest/archive pair-count mismatch");
  }
  return shadow;
}

void assign_nearest_anchors(AnchorSet& anchors, const Matrix& wm_reps) {
  const int n = static_cast<int>(wm_reps.rows());
  const int a = anchors.num_anchors;
  if (a < 1 || anchors.anchors.cols() != wm_reps.cols()) {
    throw std::invalid_argument("assign_nearest_anchors: inconsistent inputs");
  }
  const int cap = (n + a - 1) / a;

  struct Claim {
    double affinity;
    int sample;
    int anchor;
  };
  std::vector<Claim> claims;
  claims.reserve(static_cast<std::size_t>(n) * a);
  for (int i = 0; i < n; ++i) {
    const double rn = wm_reps.row(i).norm();
    for (int j = 0; j < a; ++j) {
      const double an = anchors.anchors.row(j).norm();
      const double sim = (rn < 1e-12 || an < 1e-12)
                             ? -1.0
                             : wm_reps.row(i).dot(anchors.anchors.row(j)) /
                                   (rn * an);
      claims.push_back({sim, i, j});
    }
  }
  std::sort(claims.begin(), claims.end(), [](const Claim& x, const Claim& y) {
    if (x.affinity != y.affinity) return x.affinity > y.affinity;
    if (x.sample != y.sample) return x.sample < y.sample;
    return x.anchor < y.anchor;
  });

  anchors.custom_assignment.assign(n, -1);
  std::vector<int> counts(a, 0);
  int assigned = 0;
  for (const Claim& c : claims) {
    if (assigned == n) break;
    if (anchors.custom_assignment[c.sample] != -1 || counts[c.anchor] >= cap) {
      continue;
    }
    anchors.custom_assignment[c.sample] = c.anchor;
    ++counts[c.anchor];
    ++assigned;
  }
}

void save_anchor_set(const AnchorSet& anchors, const std::string& array_path,
                     const std::string& manifest_path) {
  std::ofstream out(array_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + array_path);
  out.write(kAnchorMagic, sizeof(kAnchorMagic));
  const std::int32_t dims[2] = {
      static_cast<std::int32_t>(anchors.anchors.rows()),
      static_cast<std::int32_t>(anchors.anchors.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (long r = 0; r < anchors.anchors.rows(); ++r) {
    for (long c = 0; c < anchors.anchors.cols(); ++c) {
      const double v = anchors.anchors(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw std::runtime_error("write failed: " + array_path);

  json manifest;
  manifest["format"] = "encmark-anchors-v1";
  manifest["num_anchors"] = anchors.num_anchors;
  manifest["dim"] = anchors.anchors.cols();
  manifest["seed"] = anchors.seed;
  manifest["source_samples"] = anchors.source_samples;
  manifest["anchor_clusters"] = anchors.anchor_clusters;
  if (anchors.custom_assignment.empty()) {
    manifest["assignment_rule"] = "index mod num_anchors";
  } else {
    manifest["assignment_rule"] = "explicit";
    manifest["assignment"] = anchors.custom_assignment;
  }
  std::ofstream mout(manifest_path);
  if (!mout) throw std::runtime_error("cannot write " + manifest_path);
  mout << manifest.dump(2) << '\n';
}

AnchorSet load_anchor_set(const std::string& array_path,
                          const std::string& manifest_path) {
  std::ifstream in(array_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + array_path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kAnchorMagic)) {
    throw std::runtime_error("not an anchor array: " + array_path);
  }
  std::int32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] <= 0 || dims[1] <= 0) {
    throw std::runtime_error("corrupt anchor array header");
  }

  AnchorSet anchors;
  anchors.anchors.resize(dims[0], dims[1]);
  for (std::int32_t r = 0; r < dims[0]; ++r) {
    for (std::int32_t c = 0; c < dims[1]; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      anchors.anchors(r, c) = v;
    }
  }
  if (!in) throw std::runtime_error("truncated anchor array");

  std::ifstream min(manifest_path);
  if (!min) throw std::runtime_error("cannot open " + manifest_path);
  json manifest = json::parse(min);
  if (manifest.value("format", "") != "encmark-anchors-v1") {
    throw std::runtime_error("unexpected anchor manifest format");
  }
  anchors.num_anchors = manifest.at("num_anchors").get<int>();
  anchors.seed = manifest.at("seed").get<std::uint64_t>();
  anchors.source_samples =
      manifest.at("source_samples").get<std::vector<int>>();
  anchors.anchor_clusters =
      manifest.at("anchor_clusters").get<std::vector<int>>();
  if (manifest.contains("assignment")) {
    anchors.custom_assignment =
        manifest.at("assignment").get<std::vector<int>>();
  }
  if (anchors.num_anchors != dims[0]) {
    throw std::runtime_error("anchor manifest/array count mismatch");
  }
  return anchors;
}

}  // namespace encmark::shadow
