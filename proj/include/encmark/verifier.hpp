// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Black-box ownership verification. Suspects are opaque query functions —
// nothing in this module can observe parameters. EaaS tests representation
// similarity across probing pairs; MLaaS tests the downstream confidence
// shift between clean and triggered samples.

#pragma once

#include "encmark/shadow.hpp"

#include <functional>
#include <string>
#include <vector>

namespace encmark::verify {

/// image -> feature vector (no parameter access).
using SuspectEaaS = std::function<Vector(const data::Image&)>;
/// image -> probability vector over downstream classes.
using SuspectMLaaS = std::function<Vector(const data::Image&)>;

enum class Scenario { kEaaS, kMLaaS };
enum class Decision { kNotPirated, kPirated };

struct PairStat {
  int index = 0;
  double clean_value = 0.0;    // EaaS: 1-|cos|; MLaaS: P_c
  double paired_value = 0.0;   // EaaS: 0;      MLaaS: P_wm
  bool skipped = false;
};

struct VerificationReport {
  Scenario scenario = Scenario::kEaaS;
  double lambda = 0.05;
  double threshold = 0.0;  // mu for EaaS, tau for MLaaS
  int n_pairs = 0;
  int skipped = 0;
  stats::TestResult test;
  Decision decision = Decision::kNotPirated;
  std::vector<PairStat> per_pair;

  /// 0 = not pirated, 2 = pirated (1 is reserved for errors at the CLI).
  int exit_code() const { return decision == Decision::kPirated ? 2 : 0; }
};

/// Per pair: M_i = |cos(suspect(x_c), suspect(x_wm))|; tests
/// mean(1 - M) > mu with a one-sided paired t-test; pirated iff p <= lambda.
/// Zero-vector responses skip the pair; all pairs skipped is an error.
VerificationReport verify_eaas(const SuspectEaaS& suspect,
                               const shadow::ShadowDataset& shadow_set,
                               double mu = 0.3, double lambda = 0.05);

/// Per pair: P_c = top-1 confidence on the clean sample, P_wm = confidence of
/// that same class on the triggered sample; tests mean(P_c - P_wm) > tau.
VerificationReport verify_mlaas(const SuspectMLaaS& suspect,
                                const shadow::ShadowDataset& shadow_set,
                                double tau = 0.15, double lambda = 0.05);

struct SweepRow {
  int size = 0;
  double p_value = 1.0;
  Decision decision = Decision::kNotPirated;
};

/// Verification over the first k pairs for each k in sizes.
std::vector<SweepRow> probing_pair_sweep(const SuspectEaaS& suspect,
                                         const shadow::ShadowDataset& shadow_set,
                                         const std::vector<int>& sizes,
                                         double mu = 0.3, double lambda = 0.05);
std::vector<SweepRow> probing_pair_sweep_mlaas(
    const SuspectMLaaS& suspect, const shadow::ShadowDataset& shadow_set,
    const std::vector<int>& sizes, double tau = 0.15, double lambda = 0.05);

/// Structured-text report plus a per-pair CSV table.
void write_report(const VerificationReport& report,
                  const std::string& report_path,
                  const std::string& pair_table_path);

const char* to_string(Scenario s);
const char* to_string(Decision d);

}  // namespace encmark::verify
