// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/verifier.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace encmark::verify {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

VerificationReport finalize(VerificationReport report) {
  std::vector<double> a, b;
  for (const auto& p : report.per_pair) {
    if (p.skipped) continue;
    a.push_back(p.clean_value);
    b.push_back(p.paired_value);
  }
  if (a.empty()) {
    throw std::runtime_error("verification error: every probing pair was skipped");
  }
  if (a.size() < 2) {
    throw std::runtime_error("verification error: fewer than 2 usable pairs");
  }
  report.test = stats::paired_t_test_greater(a, b, report.threshold);
  report.decision = report.test.p_value <= report.lambda
                        ? Decision::kPirated
                        : Decision::kNotPirated;
  return report;
}

}  // namespace

VerificationReport verify_eaas(const SuspectEaaS& suspect,
                               const shadow::ShadowDataset& shadow_set,
                               double mu, double lambda) {
  require(shadow_set.size() > 0, "verify_eaas: empty shadow dataset");
  require(mu > 0.0 && mu < 1.0, "verify_eaas: mu must be in (0,1)");
  require(lambda > 0.0 && lambda < 1.0, "verify_eaas: lambda must be in (0,1)");

  VerificationReport report;
  report.scenario = Scenario::kEaaS;
  report.lambda = lambda;
  report.threshold = mu;
  report.n_pairs = static_cast<int>(shadow_set.size());

  for (int i = 0; i < report.n_pairs; ++i) {
    PairStat stat;
    stat.index = i;
    const Vector rc = suspect(shadow_set.clean[i]);
    const Vector rw = suspect(shadow_set.triggered[i]);
    if (rc.size() != rw.size() || rc.norm() <= 0.0 || rw.norm() <= 0.0 ||
        !rc.allFinite() || !rw.allFinite()) {
      stat.skipped = true;  // degenerate response: skip, never fabricate
      ++report.skipped;
    } else if (rc == rw) {
      stat.clean_value = 0.0;  // identical responses: exactly zero, no rounding
    } else {
      const double m = std::abs(stats::cosine_similarity(rc, rw));
      stat.clean_value = 1.0 - m;
      stat.paired_value = 0.0;
    }
    report.per_pair.push_back(stat);
  }
  return finalize(std::move(report));
}

VerificationReport verify_mlaas(const SuspectMLaaS& suspect,
                                const shadow::ShadowDataset& shadow_set,
                                double tau, double lambda) {
  require(shadow_set.size() > 0, "verify_mlaas: empty shadow dataset");
  require(tau > 0.0 && tau < 1.0, "verify_mlaas: tau must be in (0,1)");
  require(lambda > 0.0 && lambda < 1.0,
          "verify_mlaas: lambda must be in (0,1)");

  VerificationReport report;
  report.scenario = Scenario::kMLaaS;
  report.lambda = lambda;
  report.threshold = tau;
  report.n_pairs = static_cast<int>(shadow_set.size());

  for (int i = 0; i < report.n_pairs; ++i) {
    PairStat stat;
    stat.index = i;
    const Vector fc = suspect(shadow_set.clean[i]);
    const Vector fw = suspect(shadow_set.triggered[i]);
    if (!fc.allFinite() || !fw.allFinite()) {
      stat.skipped = true;
      ++report.skipped;
      report.per_pair.push_back(stat);
      continue;
    }
    const auto check_prob = [](const Vector& f) {
      if (f.size() == 0 || f.minCoeff() < -1e-9 ||
          std::abs(f.sum() - 1.0) > 1e-6) {
        throw std::invalid_argument(
            "verify_mlaas: suspect returned a non-normalized probability "
            "vector");
      }
    };
    check_prob(fc);
    check_prob(fw);
    require(fc.size() == fw.size(), "verify_mlaas: class-count mismatch");

    int top = 0;
    fc.maxCoeff(&top);
    stat.clean_value = fc(top);    // P_c
    stat.paired_value = fw(top);   // P_wm, same class
    report.per_pair.push_back(stat);
  }
  return finalize(std::move(report));
}

namespace {

shadow::ShadowDataset head_pairs(const shadow::ShadowDataset& full, int k) {
  shadow::ShadowDataset out;
  out.trigger = full.trigger;
  out.source_cluster_id = full.source_cluster_id;
  out.seed = full.seed;
  out.clean.assign(full.clean.begin(), full.clean.begin() + k);
  out.triggered.assign(full.triggered.begin(), full.triggered.begin() + k);
  if (static_cast<int>(full.source_indices.size()) >= k) {
    out.source_indices.assign(full.source_indices.begin(),
                              full.source_indices.begin() + k);
  }
  return out;
}

}  // namespace

std::vector<SweepRow> probing_pair_sweep(const SuspectEaaS& suspect,
                                         const shadow::ShadowDataset& shadow_set,
                                         const std::vector<int>& sizes,
                                         double mu, double lambda) {
  std::vector<SweepRow> rows;
  for (int k : sizes) {
    require(k >= 2 && k <= static_cast<int>(shadow_set.size()),
            "probing_pair_sweep: size out of range");
    const auto report = verify_eaas(suspect, head_pairs(shadow_set, k), mu, lambda);
    rows.push_back({k, report.test.p_value, report.decision});
  }
  return rows;
}

std::vector<SweepRow> probing_pair_sweep_mlaas(
    const SuspectMLaaS& suspect, const shadow::ShadowDataset& shadow_set,
    const std::vector<int>& sizes, double tau, double lambda) {
  std::vector<SweepRow> rows;
  for (int k : sizes) {
    require(k >= 2 && k <= static_cast<int>(shadow_set.size()),
            "probing_pair_sweep: size out of range");
    const auto report =
        verify_mlaas(suspect, head_pairs(shadow_set, k), tau, lambda);
    rows.push_back({k, report.test.p_value, report.decision});
  }
  return rows;
}

const char* to_string(Scenario s) {
  return s == Scenario::kEaaS ? "eaas" : "mlaas";
}

const char* to_string(Decision d) {
  return d == Decision::kPirated ? "pirated" : "not_pirated";
}

void write_report(const VerificationReport& report,
                  const std::string& report_path,
                  const std::string& pair_table_path) {
  std::ofstream table(pair_table_path);
  if (!table) throw std::runtime_error("cannot write " + pair_table_path);
  table << "pair,clean_value,paired_value,skipped\n";
  for (const auto& p : report.per_pair) {
    table << p.index << ',' << p.clean_value << ',' << p.paired_value << ','
          << (p.skipped ? 1 : 0) << '\n';
  }

  json doc;
  doc["scenario"] = to_string(report.scenario);
  doc["lambda"] = report.lambda;
  doc[report.scenario == Scenario::kEaaS ? "mu" : "tau"] = report.threshold;
  doc["n_pairs"] = report.n_pairs;
  doc["skipped"] = report.skipped;
  doc["t_statistic"] = report.test.t_statistic;
  doc["p_value"] = report.test.p_value;
  doc["degenerate"] = report.test.degenerate;
  doc["decision"] = to_string(report.decision);
  doc["per_pair_table"] = pair_table_path;
  std::ofstream out(report_path);
  if (!out) throw std::runtime_error("cannot write " + report_path);
  out << doc.dump(2) << '\n';
}

}  // namespace encmark::verify
