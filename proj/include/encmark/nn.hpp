// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal CPU tensor backend: dense / conv / pooling layers over Eigen
// matrices with explicit backward passes, flat parameter access, and plain
// or momentum SGD. Batches are row-major: one sample per row, images laid
// out channel-plane first (CHW). Everything is deterministic given seeds.

#pragma once

#include "encmark/stats.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace encmark::nn {

struct Layer {
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x) = 0;
  virtual Matrix backward(const Matrix& dy) = 0;  // accumulates param grads
  virtual int param_count() const { return 0; }
  virtual void write_params(double* out) const {}
  virtual void read_params(const double* in) {}
  virtual void write_grads(double* out) const {}
  virtual void zero_grad() {}
  virtual void init(std::mt19937_64& rng) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  Matrix forward(const Matrix& x);
  /// Backward through the whole stack; returns the gradient w.r.t. the input.
  Matrix backward(const Matrix& dy);

  void zero_grad();
  int param_count() const;
  Vector parameters() const;
  void set_parameters(const Vector& params);
  Vector gradients() const;

  std::size_t layer_count() const { return layers_.size(); }

  /// FNV-1a over the raw parameter bytes; used for lineage checks.
  std::uint64_t checksum() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// SGD with optional momentum and decoupled weight decay. Plain SGD when
/// momentum and weight_decay are zero.
struct Sgd {
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double weight_decay = 0.0;
  Vector velocity;

  void step(Network& net);
};

struct DenseLayer final : Layer {
  DenseLayer(int in, int out);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& dy) override;
  int param_count() const override;
  void write_params(double* out) const override;
  void read_params(const double* in) override;
  void write_grads(double* out) const override;
  void zero_grad() override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

  Matrix weights;  // [in x out]
  Vector bias;     // [out]
  Matrix grad_weights;
  Vector grad_bias;
  Matrix cached_input;
};

struct ReluLayer final : Layer {
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& dy) override;
  std::unique_ptr<Layer> clone() const override;
  Matrix cached_input;
};

/// 3x3 same-padding convolution over CHW rows.
struct Conv2dLayer final : Layer {
  Conv2dLayer(int height, int width, int in_channels, int out_channels);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& dy) override;
  int param_count() const override;
  void write_params(double* out) const override;
  void read_params(const double* in) override;
  void write_grads(double* out) const override;
  void zero_grad() override;
  void init(std::mt19937_64& rng) override;
  std::unique_ptr<Layer> clone() const override;

  int height, width, in_channels, out_channels;
  static constexpr int kKernel = 3;
  Matrix weights;  // [in_c*3*3 x out_c]
  Vector bias;     // [out_c]
  Matrix grad_weights;
  Vector grad_bias;
  Matrix cached_input;

 private:
  Matrix im2col(const Matrix& x) const;  // [n*h*w x in_c*9]
};

/// 2x2 average pooling, stride 2, over CHW rows.
struct AvgPool2Layer final : Layer {
  AvgPool2Layer(int height, int width, int channels);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& dy) override;
  std::unique_ptr<Layer> clone() const override;

  int height, width, channels;
};

/// Four conv/relu/pool stages followed by a dense projection to `dim`.
/// channels.size() must be 4 and height/width divisible by 16.
Network make_conv4_encoder(int height, int width, int in_channels,
                           const std::vector<int>& channels, int dim,
                           std::uint64_t seed);

/// Dense stack with ReLU between layers (no trailing ReLU).
Network make_mlp(const std::vector<int>& widths, std::uint64_t seed);

/// Row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace encmark::nn
