// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/harness.hpp"

#include "encmark/adversary.hpp"
#include "encmark/diagnostics.hpp"
#include "encmark/embedder.hpp"
#include "encmark/pretrain.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace encmark::harness {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

template <typename T>
T cfg_get(const YAML::Node& node, const std::string& key, T fallback) {
  if (node && node[key]) return node[key].as<T>();
  return fallback;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return json::parse(in);
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

double json_double(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

json double_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out.precision(17);
  out << v;
  std::string s = out.str();
  return s;
}

// ---------------------------------------------------------------------------
// Stage execution context

struct StageOutcome {
  json manifest;
  std::vector<ResultsRow> rows;
  std::vector<std::string> log;
  bool cached = false;
};

struct StageContext {
  const ExperimentPlan& plan;
  const StageSpec& spec;
  std::string dir;  // <output_dir>/<id>
  std::uint64_t seed = 0;
  std::string config_hash;
  // Manifests of this stage's inputs, by stage id.
  const std::map<std::string, json>& parents;

  const json& parent(const std::string& role_hint = "") const {
    require(!spec.inputs.empty(),
            "stage " + spec.id + ": missing input" +
                (role_hint.empty() ? "" : " (" + role_hint + ")"));
    return parents.at(spec.inputs.front());
  }
  const json& parent_of_kind(const std::string& kind) const {
    for (const auto& in : spec.inputs) {
      const json& m = parents.at(in);
      if (m.at("kind").get<std::string>() == kind) return m;
    }
    throw std::invalid_argument("stage " + spec.id + ": needs a '" + kind +
                                "' input");
  }
  bool has_parent_of_kind(const std::string& kind) const {
    for (const auto& in : spec.inputs) {
      if (parents.at(in).at("kind").get<std::string>() == kind) return true;
    }
    return false;
  }
};

std::string stage_dir_of(const json& manifest) {
  return manifest.at("dir").get<std::string>();
}

// ---------------------------------------------------------------------------
// Datasets

data::Dataset make_dataset(const YAML::Node& node, std::uint64_t seed_base) {
  const std::string kind = cfg_get<std::string>(node, "dataset", "striped");
  const int n = cfg_get<int>(node, "n", 256);
  const std::uint64_t seed =
      node && node["data_seed"] ? node["data_seed"].as<std::uint64_t>()
                                : seed_base;
  if (kind == "striped") {
    return data::make_striped_dataset(n, cfg_get<int>(node, "classes", 10),
                                      seed);
  }
  if (kind == "xor") return data::make_xor_dataset(n, seed);
  if (kind == "cifar10") {
    return data::load_cifar10_batch(
        cfg_get<std::string>(node, "path", "data_batch_1.bin"), n);
  }
  throw std::invalid_argument("unknown dataset kind: " + kind);
}

void split_dataset(const data::Dataset& pool, double train_fraction,
                   data::Dataset& train, data::Dataset& test) {
  const int n = static_cast<int>(pool.size());
  const int n_train = static_cast<int>(train_fraction * n);
  train.num_classes = test.num_classes = pool.num_classes;
  for (int i = 0; i < n; ++i) {
    auto& dst = i < n_train ? train : test;
    dst.images.push_back(pool.images[i]);
    dst.labels.push_back(pool.labels[i]);
  }
}

// YAML node for the pretraining-data description recorded in a stage
// manifest, so downstream stages rebuild the exact dataset.
YAML::Node manifest_config(const json& manifest) {
  return YAML::Load(manifest.at("config_yaml").get<std::string>());
}

// ---------------------------------------------------------------------------
// Encoder / model artifact helpers

void save_stage_encoder(const EncoderHandle& enc, const std::string& dir,
                        const std::string& base,
                        const std::string& config_hash) {
  save_encoder(enc, dir + "/" + base + ".bin", dir + "/" + base + ".json",
               config_hash);
}

EncoderHandle load_stage_encoder(const json& manifest,
                                 const std::string& base = "") {
  const std::string dir = stage_dir_of(manifest);
  std::string name = base;
  if (name.empty()) {
    name = manifest.value("encoder_file", "encoder");
  }
  return load_encoder(dir + "/" + name + ".bin", dir + "/" + name + ".json");
}

bool stage_has_downstream(const json& manifest) {
  return fs::exists(stage_dir_of(manifest) + "/model_head.bin");
}

adversary::DownstreamModel load_stage_downstream(const json& manifest) {
  return adversary::load_downstream(stage_dir_of(manifest) + "/model");
}

shadow::ShadowDataset load_stage_shadow(const json& manifest) {
  const std::string dir = stage_dir_of(manifest);
  return shadow::load_shadow_dataset(dir + "/shadow.bin",
                                     dir + "/shadow.json");
}

shadow::AnchorSet load_stage_anchors(const json& manifest) {
  const std::string dir = stage_dir_of(manifest);
  return shadow::load_anchor_set(dir + "/anchors.bin", dir + "/anchors.json");
}

shadow::ShadowDataset shadow_head(const shadow::ShadowDataset& full, int k) {
  if (k <= 0 || k >= static_cast<int>(full.size())) return full;
  shadow::ShadowDataset sub = full;
  sub.clean.assign(full.clean.begin(), full.clean.begin() + k);
  sub.triggered.assign(full.triggered.begin(), full.triggered.begin() + k);
  sub.source_indices.assign(full.source_indices.begin(),
                            full.source_indices.begin() + k);
  return sub;
}

// ---------------------------------------------------------------------------
// Stage bodies

void run_pretrain_stage(StageContext& ctx, StageOutcome& out) {
  pretrain::PretrainConfig cfg;
  const YAML::Node& c = ctx.spec.config;
  cfg.dataset_id = cfg_get<std::string>(c, "dataset", "striped");
  cfg.architecture =
      cfg_get<std::string>(c, "architecture", "mlp:3072,128,64");
  cfg.subset_size = cfg_get<int>(c, "subset_size", 0);
  cfg.batch_size = cfg_get<int>(c, "batch_size", 64);
  cfg.temperature = cfg_get<double>(c, "temperature", 0.5);
  cfg.epochs = cfg_get<int>(c, "epochs", 10);
  cfg.learning_rate = cfg_get<double>(c, "learning_rate", 0.02);
  cfg.seed = ctx.seed;

  const data::Dataset ds = make_dataset(c, ctx.seed);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = pretrain::pretrain_simclr(cfg, ds);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (result.collapsed) {
    throw std::runtime_error("stage " + ctx.spec.id +
                             ": pretraining collapsed (representation "
                             "variance < 1e-6)");
  }
  save_stage_encoder(result.encoder, ctx.dir, "encoder", ctx.config_hash);
  out.manifest["seconds"] = seconds;
  out.manifest["metrics"]["init_checksum"] = hex64(result.init_checksum);
  out.manifest["metrics"]["final_checksum"] =
      hex64(result.encoder.network.checksum());
  if (!result.epoch_loss.empty()) {
    out.manifest["metrics"]["final_loss"] = result.epoch_loss.back();
  }
}

void run_negatives_stage(StageContext& ctx, StageOutcome& out) {
  const YAML::Node& c = ctx.spec.config;
  const YAML::Node base = c["base"] ? c["base"] : c;
  pretrain::PretrainConfig cfg;
  cfg.dataset_id = cfg_get<std::string>(base, "dataset", "striped");
  cfg.architecture =
      cfg_get<std::string>(base, "architecture", "mlp:3072,128,64");
  cfg.subset_size = cfg_get<int>(base, "subset_size", 0);
  cfg.batch_size = cfg_get<int>(base, "batch_size", 64);
  cfg.temperature = cfg_get<double>(base, "temperature", 0.5);
  cfg.epochs = cfg_get<int>(base, "epochs", 10);
  cfg.learning_rate = cfg_get<double>(base, "learning_rate", 0.02);
  // The victim's training seed, so v1/v2 differ from it only in the intended
  // dimension. The victim stage is this stage's input when present.
  cfg.seed = ctx.spec.inputs.empty()
                 ? ctx.seed
                 : ctx.parents.at(ctx.spec.inputs.front())
                       .at("seed")
                       .get<std::uint64_t>();
  const std::uint64_t data_seed =
      cfg_get<std::uint64_t>(base, "data_seed", ctx.seed);
  const int n = cfg_get<int>(base, "n", 256);
  const int classes = cfg_get<int>(base, "classes", 10);
  const std::string dataset = cfg.dataset_id;

  std::vector<pretrain::NegativeVariantSpec> specs;
  std::vector<std::string> names =
      c["variants"] ? c["variants"].as<std::vector<std::string>>()
                    : std::vector<std::string>{"v1", "v2", "v3", "v4"};
  using V = pretrain::NegativeVariantSpec::Variant;
  for (const auto& name : names) {
    pretrain::NegativeVariantSpec spec;
    if (name == "v1") spec.variant = V::kV1;
    else if (name == "v2") spec.variant = V::kV2;
    else if (name == "v3") spec.variant = V::kV3;
    else if (name == "v4") spec.variant = V::kV4;
    else throw std::invalid_argument("unknown negative variant: " + name);
    specs.push_back(spec);
  }

  const auto factory = [&](std::uint64_t seed) {
    if (dataset == "striped") {
      return data::make_striped_dataset(n, classes, seed);
    }
    if (dataset == "xor") return data::make_xor_dataset(n, seed);
    throw std::invalid_argument("negatives: unsupported dataset " + dataset);
  };
  const auto negs = pretrain::make_negatives(cfg, data_seed, factory, specs);
  json lineage = json::array();
  for (const auto& neg : negs) {
    save_stage_encoder(neg.encoder, ctx.dir, neg.variant_id, ctx.config_hash);
    lineage.push_back({{"variant", neg.variant_id},
                       {"init_checksum", hex64(neg.init_checksum)},
                       {"data_seed", neg.data_seed},
                       {"train_seed", neg.train_seed}});
  }
  out.manifest["metrics"]["negatives"] = lineage;
}

void run_shadow_stage(StageContext& ctx, StageOutcome& out) {
  const json& pre = ctx.parent_of_kind("pretrain");
  EncoderHandle clean = load_stage_encoder(pre);
  const data::Dataset ds = make_dataset(manifest_config(pre),
                                        pre.at("seed").get<std::uint64_t>());
  const YAML::Node& c = ctx.spec.config;
  const int k_clusters = cfg_get<int>(c, "k_clusters", 10);
  const int S = cfg_get<int>(c, "S", 64);
  const int A = cfg_get<int>(c, "A", 4);

  auto fn = as_encoder_fn(clean);
  const auto selection =
      shadow::select_source_class(fn, ds, k_clusters, ctx.seed);
  const auto trigger = data::default_trigger(
      ds.images.front().height, cfg_get<int>(c, "patch_size", -1));
  const auto shadow_set = shadow::build_shadow_dataset(fn, ds, selection,
                                                       trigger, S, ctx.seed);
  auto anchors = shadow::compute_anchors(selection, A, ctx.seed);
  // With a clean downstream probe as an extra input, keep only one anchor
  // per predicted task class: anchors that collapse onto the same class
  // cannot spread triggered predictions any further, which is the point of
  // entanglement. This is owner-side tuning on the owner's own probe.
  if (ctx.has_parent_of_kind("transfer")) {
    const auto probe = adversary::load_downstream(
        stage_dir_of(ctx.parent_of_kind("transfer")) + "/model");
    std::vector<int> keep;
    std::set<int> seen;
    for (int j = 0; j < anchors.num_anchors; ++j) {
      const Vector logits =
          probe.head_weights.transpose() * anchors.anchors.row(j).transpose() +
          probe.head_bias;
      int cls = 0;
      logits.maxCoeff(&cls);
      if (seen.insert(cls).second) keep.push_back(j);
    }
    if (static_cast<int>(keep.size()) < anchors.num_anchors) {
      shadow::AnchorSet dedup;
      dedup.num_anchors = static_cast<int>(keep.size());
      dedup.anchors = Matrix(dedup.num_anchors, anchors.anchors.cols());
      for (int j = 0; j < dedup.num_anchors; ++j) {
        dedup.anchors.row(j) = anchors.anchors.row(keep[j]);
        dedup.source_samples.push_back(anchors.source_samples[keep[j]]);
        dedup.anchor_clusters.push_back(anchors.anchor_clusters[keep[j]]);
      }
      anchors = std::move(dedup);
    }
  }
  // Content-aligned assignments entangle far more easily than round-robin.
  if (cfg_get<std::string>(c, "assignment", "nearest") == "nearest") {
    const Matrix wm_reps = fn(data::to_matrix(shadow_set.triggered));
    shadow::assign_nearest_anchors(anchors, wm_reps);
  }
  shadow::save_shadow_dataset(shadow_set, ctx.dir + "/shadow.bin",
                              ctx.dir + "/shadow.json");
  shadow::save_anchor_set(anchors, ctx.dir + "/anchors.bin",
                          ctx.dir + "/anchors.json");
  out.manifest["metrics"]["source_cluster"] = shadow_set.source_cluster_id;
  out.manifest["metrics"]["pairs"] = static_cast<int>(shadow_set.size());
}

void run_embed_stage(StageContext& ctx, StageOutcome& out, bool baseline) {
  const json& pre = ctx.parent_of_kind("pretrain");
  const json& sh = ctx.parent_of_kind("shadow");
  EncoderHandle clean = load_stage_encoder(pre);
  const auto shadow_set = load_stage_shadow(sh);
  const auto anchors = load_stage_anchors(sh);

  const YAML::Node& c = ctx.spec.config;
  embed::WatermarkConfig cfg;
  cfg.alpha = cfg_get<double>(c, "alpha", 1.0);
  cfg.beta = cfg_get<double>(c, "beta", 1.0);
  cfg.warm_epochs = cfg_get<int>(c, "warm_epochs", 5);
  cfg.total_epochs = cfg_get<int>(c, "total_epochs", 30);
  cfg.learning_rate = cfg_get<double>(c, "learning_rate", 1e-3);
  cfg.swd_directions = cfg_get<int>(c, "swd_directions", 64);
  cfg.batch_size = cfg_get<int>(c, "batch_size", 64);
  cfg.num_anchors = anchors.num_anchors;
  cfg.shadow_size = static_cast<int>(shadow_set.size());
  cfg.seed = ctx.seed;

  const auto t0 = std::chrono::steady_clock::now();
  embed::EmbedResult result;
  if (baseline) {
    result = embed::embed_baseline_cluster(clean, shadow_set, cfg);
  } else {
    data::Dataset ds = make_dataset(manifest_config(pre),
                                    pre.at("seed").get<std::uint64_t>());
    // The reference loss only needs representative clean batches; a subset
    // of the pretraining data keeps embedding cheap at desk scale.
    const int ref_subset = cfg_get<int>(c, "ref_subset", 0);
    if (ref_subset > 0 && ref_subset < static_cast<int>(ds.size())) {
      ds.images.resize(ref_subset);
      if (!ds.labels.empty()) ds.labels.resize(ref_subset);
    }
    result = embed::embed_watermark(clean, ds, shadow_set, anchors, cfg);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (result.trace.aborted) {
    throw std::runtime_error("stage " + ctx.spec.id + ": embedding aborted (" +
                             result.trace.abort_reason + ")");
  }
  save_stage_encoder(result.encoder, ctx.dir, "encoder", ctx.config_hash);
  result.trace.write_csv(ctx.dir + "/trace.csv");
  out.manifest["seconds"] = seconds;
  const double pretrain_seconds = pre.value("seconds", 0.0);
  if (pretrain_seconds > 0.0) {
    out.manifest["metrics"]["overhead_fraction"] = seconds / pretrain_seconds;
  }
  out.manifest["metrics"]["final_checksum"] =
      hex64(result.encoder.network.checksum());
}

void run_transfer_stage(StageContext& ctx, StageOutcome& out) {
  const json& parent = ctx.parent("encoder stage");
  EncoderHandle enc = load_stage_encoder(
      parent, cfg_get<std::string>(ctx.spec.config, "encoder_file", ""));

  const YAML::Node& c = ctx.spec.config;
  const data::Dataset pool = make_dataset(c["task"] ? c["task"] : c,
                                          ctx.seed ^ 0x5851f42d4c957f2dull);
  data::Dataset train, test;
  split_dataset(pool, cfg_get<double>(c, "train_fraction", 0.8), train, test);

  auto model = adversary::transfer_downstream(
      enc, train, cfg_get<int>(c, "epochs", 300),
      cfg_get<double>(c, "learning_rate", 0.3), ctx.seed);
  model.task_id = cfg_get<std::string>(c, "task_id", ctx.spec.id);
  adversary::save_downstream(model, ctx.dir + "/model");

  out.manifest["metrics"]["acc"] = model.accuracy(test);
  out.manifest["metrics"]["train_acc"] = model.accuracy(train);
  // Row labeling is inherited from the encoder's history.
  out.manifest["metrics"]["attack"] =
      parent.contains("metrics") && parent["metrics"].contains("attack")
          ? parent["metrics"]["attack"].get<std::string>()
          : std::string("none");
  out.manifest["metrics"]["params"] =
      parent.contains("metrics") && parent["metrics"].contains("params")
          ? parent["metrics"]["params"].get<std::string>()
          : std::string();
}

void run_attack_stage(StageContext& ctx, StageOutcome& out) {
  const YAML::Node& c = ctx.spec.config;
  const std::string kind = cfg_get<std::string>(c, "attack", "prune");
  std::string params;

  if (kind == "finetune" || kind == "prune") {
    adversary::DownstreamModel model =
        load_stage_downstream(ctx.parent("downstream model"));
    const data::Dataset pool = make_dataset(
        c["task"] ? c["task"] : c, ctx.seed ^ 0x5851f42d4c957f2dull);
    data::Dataset train, test;
    split_dataset(pool, cfg_get<double>(c, "train_fraction", 0.8), train,
                  test);
    adversary::DownstreamModel attacked;
    if (kind == "finetune") {
      const double eta = cfg_get<double>(c, "eta", 1e-3);
      const double decay = cfg_get<double>(c, "decay", 1e-6);
      auto result = adversary::attack_finetune(
          model, train, eta, decay, cfg_get<int>(c, "max_epochs", 40),
          cfg_get<int>(c, "plateau_epochs", 5), ctx.seed);
      if (result.diverged) {
        throw std::runtime_error("stage " + ctx.spec.id +
                                 ": fine-tuning diverged");
      }
      attacked = std::move(result.model);
      std::ostringstream p;
      p << "eta=" << eta << ";decay=" << decay
        << ";epochs=" << result.epochs_run;
      params = p.str();
    } else {
      const double r = cfg_get<double>(c, "r", 0.6);
      attacked = adversary::attack_prune(model, r);
      std::ostringstream p;
      p << "r=" << r;
      params = p.str();
    }
    adversary::save_downstream(attacked, ctx.dir + "/model");
    out.manifest["metrics"]["acc"] = attacked.accuracy(test);
  } else if (kind == "overwrite" || kind == "unlearn" || kind == "adaptive") {
    EncoderHandle enc = load_stage_encoder(ctx.parent("encoder stage"));
    const data::Dataset aux = make_dataset(
        c["aux"] ? c["aux"] : c, ctx.seed ^ 0x9e3779b97f4a7c15ull);
    const int epochs = cfg_get<int>(c, "epochs", 20);
    const double lr = cfg_get<double>(c, "learning_rate", 1e-3);
    EncoderHandle attacked;
    if (kind == "overwrite") {
      const int target = cfg_get<int>(c, "target_class", 0);
      // The attacker plants its own pseudo-watermark with a guessed trigger
      // location (top-left by default), not the owner's footprint.
      auto own_trigger = data::default_trigger(
          aux.images.front().height, cfg_get<int>(c, "patch_size", -1));
      own_trigger.row = cfg_get<int>(c, "trigger_row", 0);
      own_trigger.col = cfg_get<int>(c, "trigger_col", 0);
      auto result = adversary::attack_overwrite(enc, own_trigger, aux, target,
                                                epochs, lr, ctx.seed);
      attacked = std::move(result.encoder);
      std::ostringstream p;
      p << "target=" << target << ";success=" << result.success_rate;
      params = p.str();
      out.manifest["metrics"]["success_rate"] = result.success_rate;
    } else if (kind == "unlearn") {
      auto new_trigger = data::default_trigger(
          aux.images.front().height, cfg_get<int>(c, "patch_size", -1));
      // The attacker guesses its own trigger location, distinct from the
      // owner's bottom-right footprint.
      new_trigger.row = cfg_get<int>(c, "trigger_row", 0);
      new_trigger.col = cfg_get<int>(c, "trigger_col", 0);
      attacked = adversary::attack_unlearn(enc, aux.images, new_trigger,
                                           epochs, lr, ctx.seed);
      params = "trigger=guessed";
    } else {
      const auto shadow_set = load_stage_shadow(ctx.parent_of_kind("shadow"));
      const double psi = cfg_get<double>(c, "psi", 0.5);
      attacked = adversary::attack_adaptive_remove(enc, shadow_set, psi, aux,
                                                   epochs, lr, ctx.seed);
      std::ostringstream p;
      p << "psi=" << psi;
      params = p.str();
    }
    save_stage_encoder(attacked, ctx.dir, "encoder", ctx.config_hash);
  } else {
    throw std::invalid_argument("unknown attack kind: " + kind);
  }
  out.manifest["metrics"]["attack"] = kind;
  out.manifest["metrics"]["params"] = params;
}

ResultsRow row_from_report(const json& suspect,
                           const verify::VerificationReport& report,
                           const std::string& scenario,
                           const std::string& params_extra = "") {
  ResultsRow row;
  row.suspect = suspect.at("id").get<std::string>();
  row.scenario = scenario;
  row.acc = suspect.contains("metrics") && suspect["metrics"].contains("acc")
                ? suspect["metrics"]["acc"].get<double>()
                : std::numeric_limits<double>::quiet_NaN();
  row.p_value = report.test.p_value;
  row.decision = verify::to_string(report.decision);
  row.attack =
      suspect.contains("metrics") && suspect["metrics"].contains("attack")
          ? suspect["metrics"]["attack"].get<std::string>()
          : std::string("none");
  row.params =
      suspect.contains("metrics") && suspect["metrics"].contains("params")
          ? suspect["metrics"]["params"].get<std::string>()
          : std::string();
  if (!params_extra.empty()) {
    row.params = row.params.empty() ? params_extra
                                    : row.params + ";" + params_extra;
  }
  return row;
}

verify::SuspectEaaS eaas_suspect(EncoderHandle& enc) {
  return [&enc](const data::Image& img) -> Vector {
    std::vector<data::Image> one{img};
    return enc.encode(data::to_matrix(one)).row(0);
  };
}

void run_verify_stage(StageContext& ctx, StageOutcome& out) {
  const YAML::Node& c = ctx.spec.config;
  const std::string scenario = cfg_get<std::string>(c, "scenario", "mlaas");
  const double lambda = cfg_get<double>(c, "lambda", 0.05);
  const int pairs = cfg_get<int>(c, "pairs", 0);

  const json& sh = ctx.parent_of_kind("shadow");
  const auto shadow_set = shadow_head(load_stage_shadow(sh), pairs);

  // The suspect is whichever input is not the shadow stage.
  const json* suspect = nullptr;
  for (const auto& in : ctx.spec.inputs) {
    const json& m = ctx.parents.at(in);
    if (m.at("kind").get<std::string>() != "shadow") suspect = &m;
  }
  require(suspect != nullptr, "stage " + ctx.spec.id + ": no suspect input");

  verify::VerificationReport report;
  if (scenario == "mlaas") {
    require(stage_has_downstream(*suspect),
            "stage " + ctx.spec.id + ": mlaas needs a downstream suspect");
    auto model = load_stage_downstream(*suspect);
    report = verify::verify_mlaas(model.as_suspect(), shadow_set,
                                  cfg_get<double>(c, "tau", 0.15), lambda);
  } else if (scenario == "eaas") {
    EncoderHandle enc =
        stage_has_downstream(*suspect)
            ? load_stage_downstream(*suspect).encoder
            : load_stage_encoder(*suspect,
                                 cfg_get<std::string>(c, "encoder_file", ""));
    report = verify::verify_eaas(eaas_suspect(enc), shadow_set,
                                 cfg_get<double>(c, "mu", 0.3), lambda);
  } else {
    throw std::invalid_argument("unknown scenario: " + scenario);
  }
  verify::write_report(report, ctx.dir + "/report.json",
                       ctx.dir + "/pairs.csv");
  out.rows.push_back(row_from_report(*suspect, report, scenario));
}

void run_sweep_stage(StageContext& ctx, StageOutcome& out) {
  const YAML::Node& c = ctx.spec.config;
  const std::string scenario = cfg_get<std::string>(c, "scenario", "mlaas");
  const double lambda = cfg_get<double>(c, "lambda", 0.05);
  std::vector<int> sizes =
      c["sizes"] ? c["sizes"].as<std::vector<int>>()
                 : std::vector<int>{20, 50, 100, 200};

  const json& sh = ctx.parent_of_kind("shadow");
  const auto shadow_set = load_stage_shadow(sh);
  const json* suspect = nullptr;
  for (const auto& in : ctx.spec.inputs) {
    const json& m = ctx.parents.at(in);
    if (m.at("kind").get<std::string>() != "shadow") suspect = &m;
  }
  require(suspect != nullptr, "stage " + ctx.spec.id + ": no suspect input");

  std::vector<verify::SweepRow> sweep;
  if (scenario == "mlaas") {
    auto model = load_stage_downstream(*suspect);
    sweep = verify::probing_pair_sweep_mlaas(
        model.as_suspect(), shadow_set, sizes,
        cfg_get<double>(c, "tau", 0.15), lambda);
  } else {
    EncoderHandle enc = stage_has_downstream(*suspect)
                            ? load_stage_downstream(*suspect).encoder
                            : load_stage_encoder(*suspect);
    sweep = verify::probing_pair_sweep(eaas_suspect(enc), shadow_set, sizes,
                                       cfg_get<double>(c, "mu", 0.3), lambda);
  }
  std::ofstream csv(ctx.dir + "/sweep.csv");
  csv << "pairs,p_value,decision\n";
  for (const auto& row : sweep) {
    csv << row.size << ',' << format_double(row.p_value) << ','
        << verify::to_string(row.decision) << '\n';
    ResultsRow r;
    r.suspect = suspect->at("id").get<std::string>();
    r.scenario = scenario;
    r.acc = suspect->contains("metrics") && (*suspect)["metrics"].contains("acc")
                ? (*suspect)["metrics"]["acc"].get<double>()
                : std::numeric_limits<double>::quiet_NaN();
    r.p_value = row.p_value;
    r.decision = verify::to_string(row.decision);
    r.attack = "none";
    r.params = "pairs=" + std::to_string(row.size);
    out.rows.push_back(std::move(r));
  }
}

void run_diagnose_stage(StageContext& ctx, StageOutcome& out) {
  const json& sh = ctx.parent_of_kind("shadow");
  const auto shadow_set = load_stage_shadow(sh);
  const json* enc_stage = nullptr;
  for (const auto& in : ctx.spec.inputs) {
    const json& m = ctx.parents.at(in);
    if (m.at("kind").get<std::string>() != "shadow") enc_stage = &m;
  }
  require(enc_stage != nullptr, "stage " + ctx.spec.id + ": no encoder input");

  EncoderHandle enc = stage_has_downstream(*enc_stage)
                          ? load_stage_downstream(*enc_stage).encoder
                          : load_stage_encoder(*enc_stage);
  auto fn = as_encoder_fn(enc);
  const auto stats = diag::intra_watermark_similarity(fn, shadow_set);
  diag::export_pca_scatter(fn, shadow_set.clean, shadow_set.triggered,
                           ctx.dir + "/scatter.csv", ctx.dir + "/scatter.ppm");
  json j;
  j["mean_pairwise_cos"] = stats.mean_pairwise_cos;
  j["clean_reference_cos"] = stats.clean_reference_cos;
  j["delta"] = stats.delta;
  if (stage_has_downstream(*enc_stage)) {
    auto model = load_stage_downstream(*enc_stage);
    const auto bias = diag::prediction_bias(model, shadow_set.triggered);
    j["top_class_fraction"] = bias.top_class_fraction;
    j["mad"] = bias.mad;
  }
  write_json(j, ctx.dir + "/stats.json");
  out.manifest["metrics"]["diagnostics"] = j;
}

void run_plot_stage(StageContext& ctx, StageOutcome& out) {
  ResultsTable table;
  std::vector<std::pair<std::string, double>> overheads;
  for (const auto& in : ctx.spec.inputs) {
    const json& m = ctx.parents.at(in);
    if (m.contains("rows")) {
      for (const auto& jr : m["rows"]) {
        ResultsRow r;
        r.suspect = jr.at("suspect").get<std::string>();
        r.scenario = jr.at("scenario").get<std::string>();
        r.acc = json_double(jr.at("acc"));
        r.p_value = json_double(jr.at("p_value"));
        r.decision = jr.at("decision").get<std::string>();
        r.attack = jr.at("attack").get<std::string>();
        r.params = jr.at("params").get<std::string>();
        table.rows.push_back(std::move(r));
      }
    }
    if (m.contains("metrics") && m["metrics"].contains("overhead_fraction")) {
      overheads.emplace_back(m.at("id").get<std::string>(),
                             m["metrics"]["overhead_fraction"].get<double>());
    }
  }
  emit_plots(table, ctx.dir, overheads);
  out.manifest["metrics"]["plotted_rows"] = static_cast<int>(table.rows.size());
}

StageOutcome execute_stage(StageContext& ctx) {
  StageOutcome out;
  out.manifest["id"] = ctx.spec.id;
  out.manifest["kind"] = ctx.spec.kind;
  out.manifest["dir"] = ctx.dir;
  out.manifest["seed"] = ctx.seed;
  out.manifest["config_hash"] = ctx.config_hash;
  out.manifest["config_yaml"] = YAML::Dump(ctx.spec.config);
  json parents = json::object();
  for (const auto& in : ctx.spec.inputs) {
    parents[in] = ctx.parents.at(in).at("config_hash");
  }
  out.manifest["parents"] = parents;

  if (ctx.spec.kind == "pretrain") run_pretrain_stage(ctx, out);
  else if (ctx.spec.kind == "negatives") run_negatives_stage(ctx, out);
  else if (ctx.spec.kind == "shadow") run_shadow_stage(ctx, out);
  else if (ctx.spec.kind == "embed") run_embed_stage(ctx, out, false);
  else if (ctx.spec.kind == "embed-baseline") run_embed_stage(ctx, out, true);
  else if (ctx.spec.kind == "transfer") run_transfer_stage(ctx, out);
  else if (ctx.spec.kind == "attack") run_attack_stage(ctx, out);
  else if (ctx.spec.kind == "verify") run_verify_stage(ctx, out);
  else if (ctx.spec.kind == "sweep") run_sweep_stage(ctx, out);
  else if (ctx.spec.kind == "diagnose") run_diagnose_stage(ctx, out);
  else if (ctx.spec.kind == "plot") run_plot_stage(ctx, out);
  else throw std::invalid_argument("unknown stage kind: " + ctx.spec.kind);

  json rows = json::array();
  for (const auto& r : out.rows) {
    rows.push_back({{"suspect", r.suspect},
                    {"scenario", r.scenario},
                    {"acc", double_json(r.acc)},
                    {"p_value", double_json(r.p_value)},
                    {"decision", r.decision},
                    {"attack", r.attack},
                    {"params", r.params}});
  }
  out.manifest["rows"] = rows;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plan handling

void ExperimentPlan::validate() const {
  require(jobs >= 1, "ExperimentPlan: jobs must be >= 1");
  std::set<std::string> seen;
  for (const auto& stage : stages) {
    require(!stage.id.empty(), "ExperimentPlan: stage id required");
    require(!seen.count(stage.id),
            "ExperimentPlan: duplicate stage id " + stage.id);
    for (const auto& in : stage.inputs) {
      // Inputs must reference earlier stages: this enforces acyclicity.
      require(seen.count(in), "ExperimentPlan: stage " + stage.id +
                                  " references unknown or later stage " + in);
    }
    seen.insert(stage.id);
  }
}

ExperimentPlan load_plan(const std::string& yaml_path) {
  const YAML::Node root = YAML::LoadFile(yaml_path);
  ExperimentPlan plan;
  plan.run_id = cfg_get<std::string>(root, "run_id", "run");
  plan.root_seed = cfg_get<std::uint64_t>(root, "root_seed", 0);
  plan.output_dir = cfg_get<std::string>(root, "output_dir", "out");
  plan.jobs = cfg_get<int>(root, "jobs", 1);
  for (const auto& node : root["stages"]) {
    StageSpec stage;
    stage.id = node["id"].as<std::string>();
    stage.kind = node["kind"].as<std::string>();
    if (node["inputs"]) {
      stage.inputs = node["inputs"].as<std::vector<std::string>>();
    }
    stage.config = node["config"] ? node["config"] : YAML::Node(YAML::NodeType::Map);
    plan.stages.push_back(std::move(stage));
  }
  plan.validate();
  return plan;
}

void save_plan(const ExperimentPlan& plan, const std::string& yaml_path) {
  YAML::Node root;
  root["run_id"] = plan.run_id;
  root["root_seed"] = plan.root_seed;
  root["output_dir"] = plan.output_dir;
  root["jobs"] = plan.jobs;
  for (const auto& stage : plan.stages) {
    YAML::Node node;
    node["id"] = stage.id;
    node["kind"] = stage.kind;
    for (const auto& in : stage.inputs) node["inputs"].push_back(in);
    node["config"] = stage.config;
    root["stages"].push_back(node);
  }
  std::ofstream out(yaml_path);
  if (!out) throw std::runtime_error("cannot write " + yaml_path);
  out << root << '\n';
}

PlanRun run_plan(const ExperimentPlan& plan) {
  plan.validate();
  fs::create_directories(plan.output_dir);

  std::map<std::string, json> manifests;
  PlanRun run;
  std::vector<std::vector<ResultsRow>> rows_by_stage(plan.stages.size());

  // Declaration order is already topological (validated); group stages into
  // dependency levels so independent stages can run concurrently.
  std::map<std::string, int> level;
  std::vector<std::vector<int>> by_level;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    int l = 0;
    for (const auto& in : plan.stages[i].inputs) {
      l = std::max(l, level.at(in) + 1);
    }
    level[plan.stages[i].id] = l;
    if (static_cast<int>(by_level.size()) <= l) by_level.resize(l + 1);
    by_level[l].push_back(static_cast<int>(i));
  }

  const auto run_one = [&](int index) -> StageOutcome {
    const StageSpec& spec = plan.stages[index];
    StageContext ctx{plan, spec, plan.output_dir + "/" + spec.id, 0, "",
                     manifests};
    // Stage seed: derived from the root seed and stage id, with an optional
    // per-stage override folded in.
    std::string seed_src = std::to_string(plan.root_seed) + "/" + spec.id;
    if (spec.config && spec.config["seed"]) {
      seed_src += "/" + spec.config["seed"].as<std::string>();
    }
    ctx.seed = fnv1a(seed_src);
    // A literal `train_seed` pins the stage seed exactly, for plans that
    // must reproduce an externally tuned configuration. It is part of the
    // config, so it participates in the cache hash like any other key.
    if (spec.config && spec.config["train_seed"]) {
      ctx.seed = spec.config["train_seed"].as<std::uint64_t>();
    }

    // Config hash covers the stage kind, config, root seed, and all parent
    // hashes — any upstream change invalidates this stage too.
    std::string hash_src = spec.kind + "\n" + YAML::Dump(spec.config) + "\n" +
                           std::to_string(plan.root_seed);
    for (const auto& in : spec.inputs) {
      hash_src += "\n" + in + ":" +
                  manifests.at(in).at("config_hash").get<std::string>();
    }
    ctx.config_hash = hex64(fnv1a(hash_src));

    const std::string manifest_path = ctx.dir + "/manifest.json";
    if (fs::exists(manifest_path)) {
      json cached = read_json(manifest_path);
      if (cached.value("config_hash", "") == ctx.config_hash) {
        StageOutcome out;
        out.manifest = std::move(cached);
        out.cached = true;
        for (const auto& jr : out.manifest["rows"]) {
          ResultsRow r;
          r.suspect = jr.at("suspect").get<std::string>();
          r.scenario = jr.at("scenario").get<std::string>();
          r.acc = json_double(jr.at("acc"));
          r.p_value = json_double(jr.at("p_value"));
          r.decision = jr.at("decision").get<std::string>();
          r.attack = jr.at("attack").get<std::string>();
          r.params = jr.at("params").get<std::string>();
          out.rows.push_back(std::move(r));
        }
        out.log.push_back("stage " + spec.id + ": cache hit");
        return out;
      }
    }
    fs::create_directories(ctx.dir);
    const auto t0 = std::chrono::steady_clock::now();
    StageOutcome out = execute_stage(ctx);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (!out.manifest.contains("seconds")) out.manifest["seconds"] = secs;
    write_json(out.manifest, manifest_path);
    std::ostringstream msg;
    msg << "stage " << spec.id << ": executed (" << secs << "s)";
    out.log.push_back(msg.str());
    return out;
  };

  for (const auto& group : by_level) {
    std::vector<std::pair<int, StageOutcome>> outcomes;
    if (plan.jobs > 1 && group.size() > 1) {
      std::vector<std::future<StageOutcome>> futures;
      std::vector<int> pending;
      for (std::size_t g = 0; g < group.size(); ++g) {
        // Launch up to `jobs` stages at a time.
        futures.push_back(std::async(std::launch::async, run_one, group[g]));
        pending.push_back(group[g]);
        if (static_cast<int>(futures.size()) == plan.jobs ||
            g + 1 == group.size()) {
          for (std::size_t f = 0; f < futures.size(); ++f) {
            outcomes.emplace_back(pending[f], futures[f].get());
          }
          futures.clear();
          pending.clear();
        }
      }
    } else {
      for (int idx : group) outcomes.emplace_back(idx, run_one(idx));
    }
    std::sort(outcomes.begin(), outcomes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [idx, outcome] : outcomes) {
      manifests[plan.stages[idx].id] = outcome.manifest;
      rows_by_stage[idx] = outcome.rows;
      outcome.cached ? ++run.cache_hits : ++run.executed;
      for (auto& line : outcome.log) run.log.push_back(std::move(line));
    }
  }

  for (auto& rows : rows_by_stage) {
    for (auto& row : rows) run.table.rows.push_back(std::move(row));
  }
  run.table.save(plan.output_dir + "/results.csv");
  return run;
}

// ---------------------------------------------------------------------------
// Results table

std::string ResultsTable::to_csv() const {
  std::ostringstream out;
  out << "suspect,scenario,acc,p_value,decision,attack,params\n";
  for (const auto& row : rows) {
    out << row.suspect << ',' << row.scenario << ',' << format_double(row.acc)
        << ',' << format_double(row.p_value) << ',' << row.decision << ','
        << row.attack << ',' << row.params << '\n';
  }
  return out.str();
}

void ResultsTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_csv();
}

// ---------------------------------------------------------------------------
// Plots

namespace {

void draw_line(diag::Canvas& canvas, int x0, int y0, int x1, int y1,
               unsigned char r, unsigned char g, unsigned char b) {
  const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  for (int s = 0; s <= steps; ++s) {
    const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
    canvas.set_pixel(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                     static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g,
                     b);
  }
}

/// Simple line chart of (x, y) points on a 480x360 canvas with axes.
void plot_curve(const std::vector<std::pair<double, double>>& points,
                const std::string& path) {
  const int w = 480, h = 360, pad = 40;
  diag::Canvas canvas(w, h);
  draw_line(canvas, pad, h - pad, w - pad, h - pad, 0, 0, 0);
  draw_line(canvas, pad, pad, pad, h - pad, 0, 0, 0);
  if (!points.empty()) {
    double min_x = points[0].first, max_x = points[0].first;
    double min_y = points[0].second, max_y = points[0].second;
    for (const auto& [x, y] : points) {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
    }
    const double sx = std::max(max_x - min_x, 1e-12);
    const double sy = std::max(max_y - min_y, 1e-12);
    int px = -1, py = -1;
    for (const auto& [x, y] : points) {
      const int cx = pad + static_cast<int>((x - min_x) / sx * (w - 2 * pad));
      const int cy =
          h - pad - static_cast<int>((y - min_y) / sy * (h - 2 * pad));
      canvas.draw_dot(cx, cy, 3, 200, 60, 40);
      if (px >= 0) draw_line(canvas, px, py, cx, cy, 200, 60, 40);
      px = cx;
      py = cy;
    }
  }
  canvas.save_ppm(path);
}

void plot_bars(const std::vector<std::pair<std::string, double>>& bars,
               const std::string& path) {
  const int w = 480, h = 360, pad = 40;
  diag::Canvas canvas(w, h);
  draw_line(canvas, pad, h - pad, w - pad, h - pad, 0, 0, 0);
  draw_line(canvas, pad, pad, pad, h - pad, 0, 0, 0);
  double max_v = 1e-12;
  for (const auto& [_, v] : bars) max_v = std::max(max_v, v);
  const int slot = (w - 2 * pad) / std::max<int>(1, static_cast<int>(bars.size()));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const int bh = static_cast<int>(bars[i].second / max_v * (h - 2 * pad));
    const int x0 = pad + static_cast<int>(i) * slot + slot / 4;
    for (int x = x0; x < x0 + slot / 2; ++x) {
      draw_line(canvas, x, h - pad - bh, x, h - pad - 1, 60, 120, 200);
    }
  }
  canvas.save_ppm(path);
}

double param_value(const std::string& params, const std::string& key) {
  const auto at = params.find(key + "=");
  if (at == std::string::npos) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return std::stod(params.substr(at + key.size() + 1));
}

}  // namespace

void emit_plots(const ResultsTable& results, const std::string& out_dir,
                const std::vector<std::pair<std::string, double>>& overheads) {
  if (results.rows.empty() && overheads.empty()) return;
  fs::create_directories(out_dir);

  std::vector<std::pair<double, double>> pairs_curve, psi_acc, psi_p;
  for (const auto& row : results.rows) {
    const double pairs = param_value(row.params, "pairs");
    if (!std::isnan(pairs)) pairs_curve.emplace_back(pairs, row.p_value);
    const double psi = param_value(row.params, "psi");
    if (!std::isnan(psi)) {
      if (!std::isnan(row.acc)) psi_acc.emplace_back(psi, row.acc);
      psi_p.emplace_back(psi, row.p_value);
    }
  }
  const auto by_x = [](const auto& a, const auto& b) {
    return a.first < b.first;
  };
  if (!pairs_curve.empty()) {
    std::sort(pairs_curve.begin(), pairs_curve.end(), by_x);
    plot_curve(pairs_curve, out_dir + "/pairs_curve.ppm");
  }
  if (!psi_acc.empty()) {
    std::sort(psi_acc.begin(), psi_acc.end(), by_x);
    plot_curve(psi_acc, out_dir + "/psi_accuracy.ppm");
  }
  if (!psi_p.empty()) {
    std::sort(psi_p.begin(), psi_p.end(), by_x);
    plot_curve(psi_p, out_dir + "/psi_pvalue.ppm");
  }
  if (!overheads.empty()) plot_bars(overheads, out_dir + "/overhead.ppm");
}

// ---------------------------------------------------------------------------
// Presets

namespace {

YAML::Node pretrain_config_desk() {
  YAML::Node c;
  c["dataset"] = "striped";
  c["n"] = 768;
  c["classes"] = 10;
  c["data_seed"] = 101;
  c["architecture"] = "conv4:32x32x3:4,8,16,16:64";
  c["epochs"] = 12;
  c["batch_size"] = 64;
  c["temperature"] = 0.5;
  c["learning_rate"] = 0.02;
  return c;
}

YAML::Node shadow_config_desk(int S) {
  YAML::Node c;
  c["k_clusters"] = 10;
  c["S"] = S;
  c["A"] = 4;
  return c;
}

YAML::Node embed_config_desk() {
  YAML::Node c;
  c["alpha"] = 1.0;
  c["beta"] = 1.0;
  c["warm_epochs"] = 4;
  c["total_epochs"] = 20;
  c["learning_rate"] = 2e-3;
  c["swd_directions"] = 32;
  c["batch_size"] = 64;
  return c;
}

YAML::Node transfer_config_desk() {
  YAML::Node c;
  c["dataset"] = "striped";
  c["n"] = 600;
  c["classes"] = 10;
  c["data_seed"] = 202;
  c["train_fraction"] = 0.8;
  c["epochs"] = 300;
  c["learning_rate"] = 0.3;
  return c;
}

StageSpec stage(const std::string& id, const std::string& kind,
                std::vector<std::string> inputs, YAML::Node config) {
  StageSpec spec;
  spec.id = id;
  spec.kind = kind;
  spec.inputs = std::move(inputs);
  spec.config = std::move(config);
  return spec;
}

YAML::Node verify_config(const std::string& scenario) {
  YAML::Node c;
  c["scenario"] = scenario;
  return c;
}

}  // namespace

ExperimentPlan preset_plan(const std::string& name,
                           const std::string& output_dir,
                           std::uint64_t root_seed) {
  ExperimentPlan plan;
  plan.run_id = name;
  plan.root_seed = root_seed;
  plan.output_dir = output_dir;

  const auto core = [&plan](int S) {
    plan.stages.push_back(
        stage("pretrain", "pretrain", {}, pretrain_config_desk()));
    plan.stages.push_back(
        stage("shadow", "shadow", {"pretrain"}, shadow_config_desk(S)));
    plan.stages.push_back(stage("embed", "embed", {"pretrain", "shadow"},
                                embed_config_desk()));
  };

  if (name == "tableII-desk") {
    core(64);
    plan.stages.push_back(stage("transfer-clean", "transfer", {"pretrain"},
                                transfer_config_desk()));
    plan.stages.push_back(stage("transfer-wm", "transfer", {"embed"},
                                transfer_config_desk()));
    plan.stages.push_back(stage("verify-clean", "verify",
                                {"transfer-clean", "shadow"},
                                verify_config("mlaas")));
    plan.stages.push_back(stage("verify-wm", "verify",
                                {"transfer-wm", "shadow"},
                                verify_config("mlaas")));
  } else if (name == "tableV-desk") {
    core(64);
    plan.stages.push_back(stage("transfer-wm", "transfer", {"embed"},
                                transfer_config_desk()));
    YAML::Node ft = transfer_config_desk();
    ft["attack"] = "finetune";
    plan.stages.push_back(stage("attack-ft", "attack", {"transfer-wm"}, ft));
    for (double r : {0.15, 0.60, 0.99}) {
      YAML::Node pr = transfer_config_desk();
      pr["attack"] = "prune";
      pr["r"] = r;
      const std::string id = "attack-pr-" + std::to_string(int(r * 100));
      plan.stages.push_back(stage(id, "attack", {"transfer-wm"}, pr));
      plan.stages.push_back(
          stage("verify-" + id, "verify", {id, "shadow"},
                verify_config("mlaas")));
    }
    plan.stages.push_back(stage("verify-ft", "verify", {"attack-ft", "shadow"},
                                verify_config("mlaas")));
  } else if (name == "tableVI-desk") {
    core(64);
    YAML::Node ow;
    ow["attack"] = "overwrite";
    ow["dataset"] = "striped";
    ow["n"] = 128;
    ow["epochs"] = 15;
    ow["learning_rate"] = 2e-3;
    plan.stages.push_back(stage("attack-overwrite", "attack", {"embed"}, ow));
    YAML::Node ul;
    ul["attack"] = "unlearn";
    ul["dataset"] = "striped";
    ul["n"] = 128;
    ul["epochs"] = 15;
    ul["learning_rate"] = 2e-3;
    plan.stages.push_back(stage("attack-unlearn", "attack", {"embed"}, ul));
    plan.stages.push_back(stage("verify-overwrite", "verify",
                                {"attack-overwrite", "shadow"},
                                verify_config("eaas")));
    plan.stages.push_back(stage("verify-unlearn", "verify",
                                {"attack-unlearn", "shadow"},
                                verify_config("eaas")));
  } else if (name == "fig2-desk") {
    core(64);
    plan.stages.push_back(stage("embed-baseline", "embed-baseline",
                                {"pretrain", "shadow"}, embed_config_desk()));
    plan.stages.push_back(stage("diagnose-baseline", "diagnose",
                                {"embed-baseline", "shadow"}, YAML::Node()));
    plan.stages.push_back(stage("diagnose-armssl", "diagnose",
                                {"embed", "shadow"}, YAML::Node()));
  } else if (name == "psi-sweep") {
    core(64);
    std::vector<std::string> verify_ids;
    for (double psi : {0.0, 0.1, 0.5}) {
      YAML::Node a;
      a["attack"] = "adaptive";
      a["psi"] = psi;
      a["dataset"] = "striped";
      a["n"] = 128;
      a["epochs"] = 15;
      a["learning_rate"] = 2e-3;
      std::ostringstream tag;
      tag << "psi-" << psi;
      plan.stages.push_back(
          stage("attack-" + tag.str(), "attack", {"embed", "shadow"}, a));
      plan.stages.push_back(stage("transfer-" + tag.str(), "transfer",
                                  {"attack-" + tag.str()},
                                  transfer_config_desk()));
      plan.stages.push_back(stage("verify-" + tag.str(), "verify",
                                  {"transfer-" + tag.str(), "shadow"},
                                  verify_config("mlaas")));
      verify_ids.push_back("verify-" + tag.str());
    }
    plan.stages.push_back(stage("plot", "plot", verify_ids, YAML::Node()));
  } else if (name == "pairs-sweep") {
    core(200);
    plan.stages.push_back(stage("transfer-wm", "transfer", {"embed"},
                                transfer_config_desk()));
    YAML::Node sw;
    sw["scenario"] = "mlaas";
    sw["sizes"].push_back(20);
    sw["sizes"].push_back(50);
    sw["sizes"].push_back(100);
    sw["sizes"].push_back(200);
    plan.stages.push_back(
        stage("sweep", "sweep", {"transfer-wm", "shadow"}, sw));
    plan.stages.push_back(stage("plot", "plot", {"sweep"}, YAML::Node()));
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  plan.validate();
  return plan;
}

}  // namespace encmark::harness
