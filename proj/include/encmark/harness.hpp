// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: YAML experiment plans, a stage scheduler with
// config-hash caching and manifest lineage, results tables mirroring the
// evaluation-table structure, and static plot emission.

#pragma once

#include "encmark/verifier.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace encmark::harness {

/// One pipeline stage. `inputs` name earlier stages whose artifacts this
/// stage consumes; the plan validator rejects forward or unknown references,
/// which also guarantees acyclicity.
struct StageSpec {
  std::string id;
  std::string kind;  // pretrain | negatives | shadow | embed | embed-baseline
                     // | transfer | attack | verify | diagnose | sweep | plot
  std::vector<std::string> inputs;
  YAML::Node config;
};

struct ExperimentPlan {
  std::string run_id;
  std::uint64_t root_seed = 0;
  std::string output_dir;
  int jobs = 1;
  std::vector<StageSpec> stages;

  void validate() const;  // throws std::invalid_argument
};

ExperimentPlan load_plan(const std::string& yaml_path);
void save_plan(const ExperimentPlan& plan, const std::string& yaml_path);

/// Built-in desk-scale plans: tableII-desk, tableV-desk, tableVI-desk,
/// fig2-desk, psi-sweep, pairs-sweep.
ExperimentPlan preset_plan(const std::string& name,
                           const std::string& output_dir,
                           std::uint64_t root_seed);

struct ResultsRow {
  std::string suspect;
  std::string scenario;  // eaas | mlaas | -
  double acc = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  std::string decision;  // not_pirated | pirated | -
  std::string attack;    // none | finetune | prune | overwrite | ...
  std::string params;    // "r=0.60" etc.
};

struct ResultsTable {
  std::vector<ResultsRow> rows;

  /// CSV with the exact header suspect,scenario,acc,p_value,decision,attack,params
  std::string to_csv() const;
  void save(const std::string& path) const;
};

struct PlanRun {
  ResultsTable table;
  int executed = 0;    // stages that actually ran
  int cache_hits = 0;  // stages reused from their manifest
  std::vector<std::string> log;
};

/// Executes the plan's stages in dependency order (independent stages run
/// concurrently up to plan.jobs), persisting every artifact under
/// <output_dir>/<stage_id>/ with a manifest carrying the config hash, parent
/// hashes, and seed. A stage whose manifest already matches its config hash
/// is reused without recomputation.
PlanRun run_plan(const ExperimentPlan& plan);

/// Static plot emission (portable pixmaps): probing-pair p-value curve,
/// psi-vs-accuracy curve, and an embedding-overhead bar chart when the
/// overhead fractions are known. Empty results emit nothing.
void emit_plots(const ResultsTable& results, const std::string& out_dir,
                const std::vector<std::pair<std::string, double>>&
                    overhead_fractions = {});

/// FNV-1a over a string; the hash used for config/lineage fingerprints.
std::uint64_t fnv1a(const std::string& text);

}  // namespace encmark::harness
