// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// encmark: command-line front end. Subcommands compose the pipeline stage by
// stage (pretrain, embed, transfer, attack, verify-*, diagnose, sweep, plot)
// or run a whole experiment plan (run-plan). Exit codes: 0 = not pirated /
// success, 2 = pirated, 1 = error.

#include <CLI11.hpp>

#include "encmark/adversary.hpp"
#include "encmark/diagnostics.hpp"
#include "encmark/embedder.hpp"
#include "encmark/harness.hpp"
#include "encmark/pretrain.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace encmark;

namespace {

struct DatasetOpts {
  std::string kind = "striped";
  int n = 768;
  int classes = 10;
  std::uint64_t seed = 1;
  std::string path;  // cifar10 batch file
};

void add_dataset_opts(CLI::App* cmd, DatasetOpts& opts,
                      const std::string& prefix = "") {
  const std::string p = prefix.empty() ? "" : prefix + "-";
  cmd->add_option("--" + p + "dataset", opts.kind,
                  "Dataset kind: striped | xor | cifar10");
  cmd->add_option("--" + p + "n", opts.n, "Number of samples");
  cmd->add_option("--" + p + "classes", opts.classes, "Class count (striped)");
  cmd->add_option("--" + p + "data-seed", opts.seed, "Dataset seed");
  cmd->add_option("--" + p + "data-path", opts.path, "CIFAR-10 batch file");
}

data::Dataset make_dataset(const DatasetOpts& opts) {
  if (opts.kind == "striped") {
    return data::make_striped_dataset(opts.n, opts.classes, opts.seed);
  }
  if (opts.kind == "xor") return data::make_xor_dataset(opts.n, opts.seed);
  if (opts.kind == "cifar10") {
    return data::load_cifar10_batch(opts.path, opts.n);
  }
  throw std::invalid_argument("unknown dataset kind: " + opts.kind);
}

EncoderHandle load_encoder_base(const std::string& base) {
  return load_encoder(base + ".bin", base + ".json");
}

void save_encoder_base(const EncoderHandle& enc, const std::string& base) {
  fs::create_directories(fs::path(base).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(base).parent_path());
  save_encoder(enc, base + ".bin", base + ".json");
}

shadow::ShadowDataset load_shadow_base(const std::string& base) {
  return shadow::load_shadow_dataset(base + ".bin", base + ".json");
}

verify::SuspectEaaS eaas_suspect(EncoderHandle& enc) {
  return [&enc](const data::Image& img) -> Vector {
    std::vector<data::Image> one{img};
    return enc.encode(data::to_matrix(one)).row(0);
  };
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

void split_dataset(const data::Dataset& pool, double train_fraction,
                   data::Dataset& train, data::Dataset& test) {
  const int n_train = static_cast<int>(train_fraction * pool.size());
  train.num_classes = test.num_classes = pool.num_classes;
  for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
    auto& dst = i < n_train ? train : test;
    dst.images.push_back(pool.images[i]);
    dst.labels.push_back(pool.labels[i]);
  }
}

int report_and_exit_code(const verify::VerificationReport& report,
                         const std::string& out_dir) {
  fs::create_directories(out_dir);
  verify::write_report(report, out_dir + "/report.json",
                       out_dir + "/pairs.csv");
  std::cout << "scenario=" << verify::to_string(report.scenario)
            << " p=" << report.test.p_value
            << " decision=" << verify::to_string(report.decision) << '\n';
  return report.exit_code();
}

harness::ResultsTable load_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  harness::ResultsTable table;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 6) continue;
    harness::ResultsRow row;
    row.suspect = fields[0];
    row.scenario = fields[1];
    row.acc = fields[2] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                 : std::stod(fields[2]);
    row.p_value = fields[3] == "nan"
                      ? std::numeric_limits<double>::quiet_NaN()
                      : std::stod(fields[3]);
    row.decision = fields[4];
    row.attack = fields[5];
    // Parameters may themselves contain ';'-separated values.
    row.params = fields.size() > 6 ? fields[6] : "";
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"encmark: ownership watermarking for SSL image encoders"};
  app.require_subcommand(1);

  // --- pretrain ------------------------------------------------------------
  auto* cmd_pre = app.add_subcommand("pretrain", "SimCLR-pretrain an encoder");
  DatasetOpts pre_data;
  std::string pre_out = "out/clean";
  std::string pre_arch = "conv4:32x32x3:4,8,16,16:64";
  pretrain::PretrainConfig pre_cfg;
  std::uint64_t pre_seed = 0;
  add_dataset_opts(cmd_pre, pre_data);
  cmd_pre->add_option("--out", pre_out, "Output encoder base path");
  cmd_pre->add_option("--arch", pre_arch, "Architecture id");
  cmd_pre->add_option("--epochs", pre_cfg.epochs, "Training epochs");
  cmd_pre->add_option("--batch", pre_cfg.batch_size, "Batch size");
  cmd_pre->add_option("--temperature", pre_cfg.temperature, "NT-Xent tau");
  cmd_pre->add_option("--lr", pre_cfg.learning_rate, "Learning rate");
  cmd_pre->add_option("--subset", pre_cfg.subset_size, "Subset size (0=all)");
  cmd_pre->add_option("--seed", pre_seed, "Training seed");

  // --- embed ---------------------------------------------------------------
  auto* cmd_embed = app.add_subcommand(
      "embed", "Build the shadow dataset and embed the watermark");
  DatasetOpts embed_data;
  std::string embed_clean, embed_out = "out/wm";
  embed::WatermarkConfig embed_cfg;
  int embed_k_clusters = 10;
  add_dataset_opts(cmd_embed, embed_data);
  cmd_embed->add_option("--encoder", embed_clean, "Clean encoder base path")
      ->required();
  cmd_embed->add_option("--out", embed_out, "Output directory");
  cmd_embed->add_option("--alpha", embed_cfg.alpha, "L_wm weight");
  cmd_embed->add_option("--beta", embed_cfg.beta, "Robust-term weight");
  cmd_embed->add_option("--warm", embed_cfg.warm_epochs, "Warm-up epochs");
  cmd_embed->add_option("--total", embed_cfg.total_epochs, "Total epochs");
  cmd_embed->add_option("--lr", embed_cfg.learning_rate, "Learning rate");
  cmd_embed->add_option("--swd-directions", embed_cfg.swd_directions,
                        "SWD projection count J");
  cmd_embed->add_option("--anchors", embed_cfg.num_anchors, "Anchor count A");
  cmd_embed->add_option("--pairs", embed_cfg.shadow_size, "Shadow pairs S");
  cmd_embed->add_option("--batch", embed_cfg.batch_size, "Batch size");
  cmd_embed->add_option("--clusters", embed_k_clusters, "k-means clusters");
  cmd_embed->add_option("--seed", embed_cfg.seed, "Embedding seed");

  // --- transfer ------------------------------------------------------------
  auto* cmd_tr = app.add_subcommand(
      "transfer", "Train a frozen-encoder downstream head");
  DatasetOpts tr_data;
  std::string tr_encoder, tr_out = "out/model";
  int tr_epochs = 300;
  double tr_lr = 0.3, tr_fraction = 0.8;
  std::uint64_t tr_seed = 0;
  add_dataset_opts(cmd_tr, tr_data);
  cmd_tr->add_option("--encoder", tr_encoder, "Encoder base path")->required();
  cmd_tr->add_option("--out", tr_out, "Output model base path");
  cmd_tr->add_option("--epochs", tr_epochs, "Head training epochs");
  cmd_tr->add_option("--lr", tr_lr, "Head learning rate");
  cmd_tr->add_option("--train-fraction", tr_fraction, "Train split fraction");
  cmd_tr->add_option("--seed", tr_seed, "Head init seed");

  // --- attack --------------------------------------------------------------
  auto* cmd_atk = app.add_subcommand("attack", "Run a removal attack");
  DatasetOpts atk_data;
  std::string atk_kind = "prune";
  std::string atk_model, atk_encoder, atk_shadow, atk_out = "out/attacked";
  double atk_r = 0.6, atk_psi = 0.5, atk_eta = 1e-3, atk_decay = 1e-6;
  double atk_lr = 2e-3;
  int atk_epochs = 20, atk_target = 0;
  std::uint64_t atk_seed = 0;
  add_dataset_opts(cmd_atk, atk_data);
  cmd_atk->add_option("--kind", atk_kind,
                      "finetune | prune | overwrite | unlearn | adaptive")
      ->required();
  cmd_atk->add_option("--model", atk_model,
                      "Downstream model base path (finetune/prune)");
  cmd_atk->add_option("--encoder", atk_encoder,
                      "Encoder base path (overwrite/unlearn/adaptive)");
  cmd_atk->add_option("--shadow", atk_shadow,
                      "True shadow base path (adaptive)");
  cmd_atk->add_option("--out", atk_out, "Output base path");
  cmd_atk->add_option("--r", atk_r, "Prune fraction");
  cmd_atk->add_option("--psi", atk_psi, "Adaptive removal weight");
  cmd_atk->add_option("--eta", atk_eta, "Fine-tune learning rate");
  cmd_atk->add_option("--decay", atk_decay, "Fine-tune weight decay");
  cmd_atk->add_option("--lr", atk_lr, "Attack learning rate");
  cmd_atk->add_option("--epochs", atk_epochs, "Attack epochs");
  cmd_atk->add_option("--target-class", atk_target, "Overwrite target class");
  cmd_atk->add_option("--seed", atk_seed, "Attack seed");

  // --- verify --------------------------------------------------------------
  auto* cmd_veaas = app.add_subcommand("verify-eaas",
                                       "Representation-level verification");
  std::string v_encoder, v_shadow, v_out = "out/verify";
  double v_mu = 0.3, v_lambda = 0.05;
  int v_pairs = 0;
  cmd_veaas->add_option("--encoder", v_encoder, "Suspect encoder base path")
      ->required();
  cmd_veaas->add_option("--shadow", v_shadow, "Shadow base path")->required();
  cmd_veaas->add_option("--mu", v_mu, "Similarity margin");
  cmd_veaas->add_option("--lambda", v_lambda, "Decision threshold");
  cmd_veaas->add_option("--pairs", v_pairs, "Probing pairs (0=all)");
  cmd_veaas->add_option("--out", v_out, "Report output directory");

  auto* cmd_vml = app.add_subcommand("verify-mlaas",
                                     "Confidence-level verification");
  std::string m_model, m_shadow, m_out = "out/verify";
  double m_tau = 0.15, m_lambda = 0.05;
  int m_pairs = 0;
  cmd_vml->add_option("--model", m_model, "Suspect model base path")
      ->required();
  cmd_vml->add_option("--shadow", m_shadow, "Shadow base path")->required();
  cmd_vml->add_option("--tau", m_tau, "Confidence-shift margin");
  cmd_vml->add_option("--lambda", m_lambda, "Decision threshold");
  cmd_vml->add_option("--pairs", m_pairs, "Probing pairs (0=all)");
  cmd_vml->add_option("--out", m_out, "Report output directory");

  // --- diagnose ------------------------------------------------------------
  auto* cmd_diag = app.add_subcommand("diagnose",
                                      "Cluster statistics and PCA scatter");
  std::string d_encoder, d_model, d_shadow, d_out = "out/diagnose";
  cmd_diag->add_option("--encoder", d_encoder, "Encoder base path");
  cmd_diag->add_option("--model", d_model, "Downstream model base path");
  cmd_diag->add_option("--shadow", d_shadow, "Shadow base path")->required();
  cmd_diag->add_option("--out", d_out, "Output directory");

  // --- sweep ---------------------------------------------------------------
  auto* cmd_sweep = app.add_subcommand("sweep", "Probing-pair-count sweep");
  std::string s_encoder, s_model, s_shadow, s_out = "out/sweep.csv";
  std::vector<int> s_sizes = {20, 50, 100, 200};
  double s_mu = 0.3, s_tau = 0.15, s_lambda = 0.05;
  cmd_sweep->add_option("--encoder", s_encoder, "Suspect encoder (EaaS)");
  cmd_sweep->add_option("--model", s_model, "Suspect model (MLaaS)");
  cmd_sweep->add_option("--shadow", s_shadow, "Shadow base path")->required();
  cmd_sweep->add_option("--sizes", s_sizes, "Pair counts");
  cmd_sweep->add_option("--mu", s_mu, "EaaS margin");
  cmd_sweep->add_option("--tau", s_tau, "MLaaS margin");
  cmd_sweep->add_option("--lambda", s_lambda, "Decision threshold");
  cmd_sweep->add_option("--out", s_out, "Output CSV path");

  // --- plot ----------------------------------------------------------------
  auto* cmd_plot = app.add_subcommand("plot", "Emit plots from a results CSV");
  std::string p_results, p_out = "out/plots";
  cmd_plot->add_option("--results", p_results, "ResultsTable CSV")->required();
  cmd_plot->add_option("--out", p_out, "Output directory");

  // --- run-plan ------------------------------------------------------------
  auto* cmd_plan = app.add_subcommand("run-plan", "Execute an experiment plan");
  std::string rp_config, rp_preset, rp_out = "out";
  std::uint64_t rp_seed = 0;
  int rp_jobs = 1;
  cmd_plan->add_option("--config", rp_config, "Plan YAML file");
  cmd_plan->add_option("--preset", rp_preset,
                       "tableII-desk | tableV-desk | tableVI-desk | "
                       "fig2-desk | psi-sweep | pairs-sweep");
  cmd_plan->add_option("--out", rp_out, "Output directory");
  cmd_plan->add_option("--seed", rp_seed, "Root seed");
  cmd_plan->add_option("--jobs", rp_jobs, "Concurrent stage limit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_pre) {
      pre_cfg.dataset_id = pre_data.kind;
      pre_cfg.architecture = pre_arch;
      pre_cfg.seed = pre_seed;
      auto result = pretrain::pretrain_simclr(pre_cfg, make_dataset(pre_data));
      if (result.collapsed) {
        std::cerr << "pretraining collapsed (representation variance < 1e-6)\n";
        return 1;
      }
      save_encoder_base(result.encoder, pre_out);
      std::cout << "encoder saved to " << pre_out << ".bin (final loss "
                << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back())
                << ")\n";
    } else if (*cmd_embed) {
      EncoderHandle clean = load_encoder_base(embed_clean);
      const auto ds = make_dataset(embed_data);
      auto fn = as_encoder_fn(clean);
      const auto selection = shadow::select_source_class(
          fn, ds, embed_k_clusters, embed_cfg.seed);
      const auto trigger = data::default_trigger(ds.images.front().height);
      const auto shadow_set = shadow::build_shadow_dataset(
          fn, ds, selection, trigger, embed_cfg.shadow_size, embed_cfg.seed);
      auto anchors = shadow::compute_anchors(
          selection, embed_cfg.num_anchors, embed_cfg.seed);
      shadow::assign_nearest_anchors(
          anchors, fn(data::to_matrix(shadow_set.triggered)));
      fs::create_directories(embed_out);
      shadow::save_shadow_dataset(shadow_set, embed_out + "/shadow.bin",
                                  embed_out + "/shadow.json");
      shadow::save_anchor_set(anchors, embed_out + "/anchors.bin",
                              embed_out + "/anchors.json");
      const auto result =
          embed::embed_watermark(clean, ds, shadow_set, anchors, embed_cfg);
      if (result.trace.aborted) {
        std::cerr << "embedding aborted: " << result.trace.abort_reason
                  << '\n';
        return 1;
      }
      save_encoder_base(result.encoder, embed_out + "/encoder");
      result.trace.write_csv(embed_out + "/trace.csv");
      std::cout << "watermarked encoder saved under " << embed_out << '\n';
    } else if (*cmd_tr) {
      EncoderHandle enc = load_encoder_base(tr_encoder);
      data::Dataset train, test;
      split_dataset(make_dataset(tr_data), tr_fraction, train, test);
      auto model = adversary::transfer_downstream(enc, train, tr_epochs,
                                                  tr_lr, tr_seed);
      adversary::save_downstream(model, tr_out);
      std::cout << "test accuracy " << model.accuracy(test) << '\n';
    } else if (*cmd_atk) {
      if (atk_kind == "finetune" || atk_kind == "prune") {
        auto model = adversary::load_downstream(atk_model);
        data::Dataset train, test;
        split_dataset(make_dataset(atk_data), 0.8, train, test);
        adversary::DownstreamModel attacked;
        if (atk_kind == "finetune") {
          auto result = adversary::attack_finetune(model, train, atk_eta,
                                                   atk_decay, atk_epochs, 5,
                                                   atk_seed);
          if (result.diverged) {
            std::cerr << "fine-tuning diverged\n";
            return 1;
          }
          attacked = std::move(result.model);
        } else {
          attacked = adversary::attack_prune(model, atk_r);
        }
        adversary::save_downstream(attacked, atk_out);
        std::cout << "attacked accuracy " << attacked.accuracy(test) << '\n';
      } else {
        EncoderHandle enc = load_encoder_base(atk_encoder);
        const auto aux = make_dataset(atk_data);
        EncoderHandle attacked;
        if (atk_kind == "overwrite") {
          auto result = adversary::attack_overwrite(
              enc, data::default_trigger(aux.images.front().height), aux,
              atk_target, atk_epochs, atk_lr, atk_seed);
          std::cout << "overwrite success rate " << result.success_rate
                    << '\n';
          attacked = std::move(result.encoder);
        } else if (atk_kind == "unlearn") {
          auto new_trigger =
              data::default_trigger(aux.images.front().height);
          new_trigger.row = new_trigger.col = 0;
          attacked = adversary::attack_unlearn(enc, aux.images, new_trigger,
                                               atk_epochs, atk_lr, atk_seed);
        } else if (atk_kind == "adaptive") {
          const auto true_shadow = load_shadow_base(atk_shadow);
          attacked = adversary::attack_adaptive_remove(
              enc, true_shadow, atk_psi, aux, atk_epochs, atk_lr, atk_seed);
        } else {
          std::cerr << "unknown attack kind: " << atk_kind << '\n';
          return 1;
        }
        save_encoder_base(attacked, atk_out);
      }
    } else if (*cmd_veaas) {
      EncoderHandle enc = load_encoder_base(v_encoder);
      const auto shadow_set = shadow_head(load_shadow_base(v_shadow), v_pairs);
      const auto report =
          verify::verify_eaas(eaas_suspect(enc), shadow_set, v_mu, v_lambda);
      return report_and_exit_code(report, v_out);
    } else if (*cmd_vml) {
      auto model = adversary::load_downstream(m_model);
      const auto shadow_set = shadow_head(load_shadow_base(m_shadow), m_pairs);
      const auto report = verify::verify_mlaas(model.as_suspect(), shadow_set,
                                               m_tau, m_lambda);
      return report_and_exit_code(report, m_out);
    } else if (*cmd_diag) {
      const auto shadow_set = load_shadow_base(d_shadow);
      EncoderHandle enc = d_model.empty()
                              ? load_encoder_base(d_encoder)
                              : adversary::load_downstream(d_model).encoder;
      fs::create_directories(d_out);
      auto fn = as_encoder_fn(enc);
      const auto stats = diag::intra_watermark_similarity(fn, shadow_set);
      diag::export_pca_scatter(fn, shadow_set.clean, shadow_set.triggered,
                               d_out + "/scatter.csv", d_out + "/scatter.ppm");
      std::ofstream json_out(d_out + "/stats.json");
      json_out << "{\n  \"mean_pairwise_cos\": " << stats.mean_pairwise_cos
               << ",\n  \"clean_reference_cos\": " << stats.clean_reference_cos
               << ",\n  \"delta\": " << stats.delta << "\n}\n";
      std::cout << "intra-watermark cos " << stats.mean_pairwise_cos
                << " (delta " << stats.delta << ")\n";
    } else if (*cmd_sweep) {
      const auto shadow_set = load_shadow_base(s_shadow);
      std::vector<verify::SweepRow> rows;
      if (!s_model.empty()) {
        auto model = adversary::load_downstream(s_model);
        rows = verify::probing_pair_sweep_mlaas(model.as_suspect(), shadow_set,
                                                s_sizes, s_tau, s_lambda);
      } else {
        EncoderHandle enc = load_encoder_base(s_encoder);
        rows = verify::probing_pair_sweep(eaas_suspect(enc), shadow_set,
                                          s_sizes, s_mu, s_lambda);
      }
      if (const auto parent = fs::path(s_out).parent_path();
          !parent.empty()) {
        fs::create_directories(parent);
      }
      std::ofstream csv(s_out);
      csv << "pairs,p_value,decision\n";
      for (const auto& row : rows) {
        csv << row.size << ',' << row.p_value << ','
            << verify::to_string(row.decision) << '\n';
      }
      std::cout << "sweep written to " << s_out << '\n';
    } else if (*cmd_plot) {
      harness::emit_plots(load_results_csv(p_results), p_out);
      std::cout << "plots written to " << p_out << '\n';
    } else if (*cmd_plan) {
      harness::ExperimentPlan plan;
      if (!rp_preset.empty()) {
        plan = harness::preset_plan(rp_preset, rp_out, rp_seed);
      } else if (!rp_config.empty()) {
        plan = harness::load_plan(rp_config);
        if (rp_out != "out") plan.output_dir = rp_out;
        if (rp_seed != 0) plan.root_seed = rp_seed;
      } else {
        std::cerr << "run-plan: need --config or --preset\n";
        return 1;
      }
      plan.jobs = rp_jobs;
      const auto run = harness::run_plan(plan);
      for (const auto& line : run.log) std::cout << line << '\n';
      std::cout << run.table.to_csv();
      std::cout << "executed " << run.executed << " stages, "
                << run.cache_hits << " cache hits\n";
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
