// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/adversary.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace encmark::adversary {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

/// Mean softmax cross-entropy and the gradient w.r.t. the logits.
struct XentResult {
  double loss = 0.0;
  Matrix grad_logits;
};

XentResult softmax_xent(const Matrix& logits, const std::vector<int>& labels) {
  const int n = static_cast<int>(logits.rows());
  XentResult out;
  out.grad_logits = nn::softmax_rows(logits);
  for (int i = 0; i < n; ++i) {
    const double p = std::max(out.grad_logits(i, labels[i]), 1e-300);
    out.loss -= std::log(p) / n;
    out.grad_logits(i, labels[i]) -= 1.0;
  }
  out.grad_logits /= n;
  return out;
}

std::vector<int> shuffled_indices(int n, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

int num_classes_of(const data::Dataset& ds) {
  std::set<int> classes(ds.labels.begin(), ds.labels.end());
  return static_cast<int>(classes.size());
}

constexpr char kHeadMagic[8] = {'E', 'N', 'C', 'H', 'E', 'A', 'D', '1'};

}  // namespace

Matrix DownstreamModel::predict(const Matrix& x) {
  const Matrix reps = encoder.encode(x);
  Matrix logits = reps * head_weights;
  logits.rowwise() += head_bias.transpose();
  return nn::softmax_rows(logits);
}

double DownstreamModel::accuracy(const data::Dataset& ds) {
  require(!ds.images.empty(), "accuracy: empty dataset");
  const Matrix probs = predict(data::to_matrix(ds.images));
  int correct = 0;
  for (int i = 0; i < probs.rows(); ++i) {
    int arg = 0;
    probs.row(i).maxCoeff(&arg);
    if (arg == ds.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

verify::SuspectMLaaS DownstreamModel::as_suspect() {
  auto self = std::make_shared<DownstreamModel>(*this);
  return [self](const data::Image& img) -> Vector {
    return self->predict(data::to_matrix({img})).row(0);
  };
}

DownstreamModel transfer_downstream(const EncoderHandle& encoder,
                                    const data::Dataset& task, int epochs,
                                    double learning_rate, std::uint64_t seed) {
  require(!task.images.empty(), "transfer_downstream: empty task data");
  const int classes = std::max(task.num_classes, num_classes_of(task));
  if (num_classes_of(task) < 2) {
    throw std::domain_error("transfer_downstream: task needs >= 2 classes");
  }

  DownstreamModel model;
  model.encoder = encoder;
  model.task_id = "linear-transfer";

  // The encoder is frozen, so representations are computed once.
  const Matrix reps = model.encoder.encode(data::to_matrix(task.images));
  const int d = static_cast<int>(reps.cols());

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(d));
  model.head_weights.resize(d, classes);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < classes; ++j) model.head_weights(i, j) = gauss(rng);
  }
  model.head_bias = Vector::Zero(classes);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix logits = reps * model.head_weights;
    logits.rowwise() += model.head_bias.transpose();
    const auto xe = softmax_xent(logits, task.labels);
    if (!std::isfinite(xe.loss)) break;
    model.head_weights -= learning_rate * (reps.transpose() * xe.grad_logits);
    model.head_bias -= learning_rate * xe.grad_logits.colwise().sum().transpose();
  }
  return model;
}

FinetuneResult attack_finetune(const DownstreamModel& model,
                               const data::Dataset& task, double eta,
                               double decay, int max_epochs,
                               int plateau_epochs, std::uint64_t seed) {
  require(!task.images.empty(), "attack_finetune: empty task data");
  FinetuneResult result;
  result.model = model;
  result.model.encoder.provenance = "attacked-ft";

  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(task.size());
  const int n_val = std::max(1, n / 5);
  auto split = shuffled_indices(n, rng);
  const std::vector<int> val_idx(split.begin(), split.begin() + n_val);
  const std::vector<int> train_idx(split.begin() + n_val, split.end());
  std::vector<int> val_labels;
  for (int i : val_idx) val_labels.push_back(task.labels[i]);
  const Matrix x_val = data::to_matrix(task, val_idx);

  nn::Sgd opt{eta, 0.0, decay};
  const int batch = 32;
  double best_val = std::numeric_limits<double>::max();
  int stall = 0;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    auto order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t b = std::min<std::size_t>(batch, order.size() - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + b);
      std::vector<int> labels;
      for (int i : idx) labels.push_back(task.labels[i]);
      const Matrix xb = data::to_matrix(task, idx);

      nn::Network& net = result.model.encoder.network;
      const Matrix reps = net.forward(xb);
      Matrix logits = reps * result.model.head_weights;
      logits.rowwise() += result.model.head_bias.transpose();
      const auto xe = softmax_xent(logits, labels);
      if (!std::isfinite(xe.loss)) {
        result.diverged = true;
        return result;
      }

      const Matrix grad_reps = xe.grad_logits * result.model.head_weights.transpose();
      net.zero_grad();
      net.backward(grad_reps);
      opt.step(net);
      result.model.head_weights -=
          eta * (reps.transpose() * xe.grad_logits +
                 decay * result.model.head_weights);
      result.model.head_bias -=
          eta * xe.grad_logits.colwise().sum().transpose();
    }
    result.epochs_run = epoch + 1;

    Matrix val_logits =
        result.model.encoder.encode(x_val) * result.model.head_weights;
    val_logits.rowwise() += result.model.head_bias.transpose();
    const double val_loss = softmax_xent(val_logits, val_labels).loss;
    result.validation_loss.push_back(val_loss);
    if (val_loss < best_val - 1e-4) {
      best_val = val_loss;
      stall = 0;
    } else if (++stall >= plateau_epochs) {
      break;
    }
  }
  return result;
}

DownstreamModel attack_prune(const DownstreamModel& model, double r) {
  require(r >= 0.0 && r <= 1.0, "attack_prune: r must be in [0,1]");
  DownstreamModel pruned = model;
  pruned.encoder.provenance = "attacked-prune";
  Vector params = pruned.encoder.network.parameters();
  const int n = static_cast<int>(params.size());
  const int count = static_cast<int>(std::floor(r * n));
  if (count > 0) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double ma = std::abs(params(a)), mb = std::abs(params(b));
      return ma != mb ? ma < mb : a < b;  // ties by index keep sets nested
    });
    for (int i = 0; i < count; ++i) params(order[i]) = 0.0;
    pruned.encoder.network.set_parameters(params);
  }
  return pruned;
}

namespace {

/// Class representation centers under the current encoder.
Matrix class_centers(EncoderHandle& enc, const data::Dataset& ds, int classes) {
  const Matrix reps = enc.encode(data::to_matrix(ds.images));
  Matrix centers = Matrix::Zero(classes, reps.cols());
  std::vector<int> counts(classes, 0);
  for (int i = 0; i < reps.rows(); ++i) {
    centers.row(ds.labels[i]) += reps.row(i);
    ++counts[ds.labels[i]];
  }
  for (int c = 0; c < classes; ++c) {
    if (counts[c] > 0) centers.row(c) /= counts[c];
  }
  return centers;
}

double nearest_center_rate(EncoderHandle& enc, const Matrix& triggered,
                           const Matrix& centers, int target_class) {
  const Matrix reps = enc.encode(triggered);
  int hits = 0;
  for (int i = 0; i < reps.rows(); ++i) {
    int best = 0;
    double best_cos = -2.0;
    for (int c = 0; c < centers.rows(); ++c) {
      if (centers.row(c).norm() <= 0.0) continue;
      const double cs = stats::cosine_similarity(reps.row(i), centers.row(c));
      if (cs > best_cos) {
        best_cos = cs;
        best = c;
      }
    }
    if (best == target_class) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(reps.rows());
}

}  // namespace

OverwriteResult attack_overwrite(const EncoderHandle& encoder,
                                 const data::TriggerPattern& trigger,
                                 const data::Dataset& aux, int target_class,
                                 int max_epochs, double learning_rate,
                                 std::uint64_t seed, double success_target) {
  require(!aux.images.empty(), "attack_overwrite: empty aux data");
  const int classes = std::max(aux.num_classes, num_classes_of(aux));
  require(target_class >= 0 && target_class < classes,
          "attack_overwrite: target class out of range");

  OverwriteResult result;
  result.encoder = encoder;
  result.encoder.provenance = "attacked-overwrite";

  std::vector<data::Image> triggered;
  triggered.reserve(aux.size());
  for (const auto& img : aux.images) {
    triggered.push_back(data::apply_trigger(img, trigger));
  }
  const Matrix x_trig = data::to_matrix(triggered);

  // The pull target is the target class's center under the original encoder.
  EncoderHandle frozen = encoder;
  const Matrix centers0 = class_centers(frozen, aux, classes);
  const Vector target = centers0.row(target_class);
  require(target.norm() > 0.0, "attack_overwrite: empty target class");
  Matrix target_rows(x_trig.rows(), target.size());
  target_rows.rowwise() = target.transpose();

  std::mt19937_64 rng(seed);
  nn::Sgd opt{learning_rate};
  const int batch = 32;

  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    const Matrix centers = class_centers(result.encoder, aux, classes);
    result.success_rate =
        nearest_center_rate(result.encoder, x_trig, centers, target_class);
    if (result.success_rate >= success_target) {
      result.reached_target = true;
      break;
    }

    auto order = shuffled_indices(static_cast<int>(x_trig.rows()), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t b = std::min<std::size_t>(batch, order.size() - start);
      Matrix xb(b, x_trig.cols());
      Matrix tb(b, target.size());
      for (std::size_t i = 0; i < b; ++i) {
        xb.row(i) = x_trig.row(order[start + i]);
        tb.row(i) = target_rows.row(order[start + i]);
      }
      nn::Network& net = result.encoder.network;
      const Matrix reps = net.forward(xb);
      const auto lg = embed::loss_ref(reps, tb);  // 1 - mean cos to the target
      net.zero_grad();
      net.backward(lg.grad_a);
      opt.step(net);
    }
    result.epochs_run = epoch + 1;
  }

  if (!result.reached_target) {
    const Matrix centers = class_centers(result.encoder, aux, classes);
    result.success_rate =
        nearest_center_rate(result.encoder, x_trig, centers, target_class);
    result.reached_target = result.success_rate >= success_target;
  }
  return result;
}

EncoderHandle attack_unlearn(const EncoderHandle& encoder,
                             const std::vector<data::Image>& guessed_clean,
                             const data::TriggerPattern& new_trigger,
                             int epochs, double learning_rate,
                             std::uint64_t seed) {
  require(!guessed_clean.empty(), "attack_unlearn: empty sample guess");
  EncoderHandle out = encoder;
  out.provenance = "attacked-unlearn";

  std::vector<data::Image> triggered;
  for (const auto& img : guessed_clean) {
    triggered.push_back(data::apply_trigger(img, new_trigger));
  }
  const Matrix x_clean = data::to_matrix(guessed_clean);
  const Matrix x_trig = data::to_matrix(triggered);

  nn::Sgd opt{learning_rate};
  (void)seed;  // full-batch updates need no sampling
  for (int epoch = 0; epoch < epochs; ++epoch) {
    nn::Network& net = out.network;
    const Matrix rc = net.forward(x_clean);
    const Matrix rw = net.forward(x_trig);
    // Maximize cosine(e(x), e(x + trigger)): descend on 1 - mean cos, with
    // gradients flowing into both sides.
    const int n = static_cast<int>(rc.rows());
    Matrix grad_c = Matrix::Zero(rc.rows(), rc.cols());
    Matrix grad_w = Matrix::Zero(rw.rows(), rw.cols());
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector a = rc.row(i), b = rw.row(i);
      const double na = a.norm(), nb = b.norm();
      if (na <= 0.0 || nb <= 0.0) {
        throw std::domain_error("attack_unlearn: zero-norm representation");
      }
      const double c = a.dot(b) / (na * nb);
      loss += (1.0 - c) / n;
      grad_c.row(i) = -(b / (na * nb) - (c / (na * na)) * a).transpose() / n;
      grad_w.row(i) = -(a / (na * nb) - (c / (nb * nb)) * b).transpose() / n;
    }
    if (!std::isfinite(loss)) break;
    net.zero_grad();
    net.forward(x_clean);
    net.backward(grad_c);
    net.forward(x_trig);
    net.backward(grad_w);
    opt.step(net);
  }
  return out;
}

EncoderHandle attack_adaptive_remove(const EncoderHandle& encoder,
                                     const shadow::ShadowDataset& true_shadow,
                                     double psi, const data::Dataset& aux,
                                     int epochs, double learning_rate,
                                     std::uint64_t seed) {
  require(psi >= 0.0, "attack_adaptive_remove: psi must be >= 0");
  require(true_shadow.size() > 0, "attack_adaptive_remove: empty shadow set");
  require(!aux.images.empty(), "attack_adaptive_remove: empty aux data");

  EncoderHandle out = encoder;
  out.provenance = "attacked-adaptive";
  nn::Network frozen = encoder.network;

  const Matrix shadow_clean = data::to_matrix(true_shadow.clean);
  const Matrix shadow_trig = data::to_matrix(true_shadow.triggered);

  std::mt19937_64 rng(seed);
  nn::Sgd opt{learning_rate};
  const int batch = 32;
  const int n = static_cast<int>(aux.size());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    auto order = shuffled_indices(n, rng);
    for (int start = 0; start < n; start += batch) {
      const int b = std::min(batch, n - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + b);
      const Matrix xb = data::to_matrix(aux, idx);

      nn::Network& net = out.network;
      const Matrix r_ref = frozen.forward(xb);
      const Matrix r_b = net.forward(xb);
      const Matrix r_sc = net.forward(shadow_clean);
      const Matrix r_sw = net.forward(shadow_trig);

      const auto l_util = embed::loss_ref(r_b, r_ref);
      const auto l_wm = embed::loss_wm(r_sc, r_sw);
      const double total = l_util.value - psi * l_wm.value;
      if (!std::isfinite(total)) return out;

      net.zero_grad();
      net.forward(xb);
      net.backward(l_util.grad_a);
      if (psi > 0.0) {
        net.forward(shadow_clean);
        net.backward(Matrix(-psi * l_wm.grad_a));
        net.forward(shadow_trig);
        net.backward(Matrix(-psi * l_wm.grad_b));
      }
      // Convergence check: at the attack's starting point the utility term
      // is exactly at its optimum, so its true gradient is zero; stepping on
      // the residual float noise would amplify it chaotically at high
      // learning rates.
      if (net.gradients().norm() < 1e-10) continue;
      opt.step(net);
    }
  }
  return out;
}

void save_downstream(const DownstreamModel& model,
                     const std::string& base_path) {
  save_encoder(model.encoder, base_path + "_enc.bin", base_path + "_enc.json");
  std::ofstream out(base_path + "_head.bin", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + base_path + "_head.bin");
  out.write(kHeadMagic, sizeof(kHeadMagic));
  const std::int32_t dims[2] = {static_cast<std::int32_t>(model.head_weights.rows()),
                                static_cast<std::int32_t>(model.head_weights.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (int i = 0; i < dims[0]; ++i) {
    for (int j = 0; j < dims[1]; ++j) {
      const double v = model.head_weights(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  for (int j = 0; j < dims[1]; ++j) {
    const double v = model.head_bias(j);
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  json meta;
  meta["format"] = "encmark-head-v1";
  meta["task_id"] = model.task_id;
  std::ofstream mout(base_path + "_head.json");
  mout << meta.dump(2) << '\n';
}

DownstreamModel load_downstream(const std::string& base_path) {
  DownstreamModel model;
  model.encoder =
      load_encoder(base_path + "_enc.bin", base_path + "_enc.json");
  std::ifstream in(base_path + "_head.bin", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + base_path + "_head.bin");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kHeadMagic)) {
    throw std::runtime_error("not a head archive: " + base_path);
  }
  std::int32_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] <= 0 || dims[1] <= 0) {
    throw std::runtime_error("corrupt head archive");
  }
  model.head_weights.resize(dims[0], dims[1]);
  for (int i = 0; i < dims[0]; ++i) {
    for (int j = 0; j < dims[1]; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      model.head_weights(i, j) = v;
    }
  }
  model.head_bias.resize(dims[1]);
  for (int j = 0; j < dims[1]; ++j) {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    model.head_bias(j) = v;
  }
  if (!in) throw std::runtime_error("truncated head archive");
  std::ifstream min(base_path + "_head.json");
  if (min) {
    json meta = json::parse(min);
    model.task_id = meta.value("task_id", "");
  }
  return model;
}

}  // namespace encmark::adversary
