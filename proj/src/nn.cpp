// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace encmark::nn {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

Network::Network(const Network& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

Network& Network::operator=(const Network& other) {
  if (this == &other) return *this;
  layers_.clear();
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
  return *this;
}

Matrix Network::forward(const Matrix& x) {
  Matrix cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur);
  return cur;
}

Matrix Network::backward(const Matrix& dy) {
  Matrix cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    cur = (*it)->backward(cur);
  }
  return cur;
}

void Network::zero_grad() {
  for (auto& layer : layers_) layer->zero_grad();
}

int Network::param_count() const {
  int total = 0;
  for (const auto& layer : layers_) total += layer->param_count();
  return total;
}

Vector Network::parameters() const {
  Vector out(param_count());
  int offset = 0;
  for (const auto& layer : layers_) {
    layer->write_params(out.data() + offset);
    offset += layer->param_count();
  }
  return out;
}

void Network::set_parameters(const Vector& params) {
  require(params.size() == param_count(), "Network: parameter size mismatch");
  int offset = 0;
  for (auto& layer : layers_) {
    layer->read_params(params.data() + offset);
    offset += layer->param_count();
  }
}

Vector Network::gradients() const {
  Vector out(param_count());
  int offset = 0;
  for (const auto& layer : layers_) {
    layer->write_grads(out.data() + offset);
    offset += layer->param_count();
  }
  return out;
}

std::uint64_t Network::checksum() const {
  Vector p = parameters();
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(p.size()) * 8; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

void Sgd::step(Network& net) {
  Vector grad = net.gradients();
  Vector params = net.parameters();
  if (weight_decay != 0.0) grad += weight_decay * params;
  if (momentum != 0.0) {
    if (velocity.size() != grad.size()) velocity = Vector::Zero(grad.size());
    velocity = momentum * velocity + grad;
    params -= learning_rate * velocity;
  } else {
    params -= learning_rate * grad;
  }
  net.set_parameters(params);
}

// ---------------------------------------------------------------------------
// Dense

DenseLayer::DenseLayer(int in, int out)
    : weights(Matrix::Zero(in, out)),
      bias(Vector::Zero(out)),
      grad_weights(Matrix::Zero(in, out)),
      grad_bias(Vector::Zero(out)) {}

Matrix DenseLayer::forward(const Matrix& x) {
  require(x.cols() == weights.rows(), "DenseLayer: input width mismatch");
  cached_input = x;
  Matrix y = x * weights;
  y.rowwise() += bias.transpose();
  return y;
}

Matrix DenseLayer::backward(const Matrix& dy) {
  grad_weights += cached_input.transpose() * dy;
  grad_bias += dy.colwise().sum().transpose();
  return dy * weights.transpose();
}

int DenseLayer::param_count() const {
  return static_cast<int>(weights.size() + bias.size());
}

void DenseLayer::write_params(double* out) const {
  std::memcpy(out, weights.data(), sizeof(double) * weights.size());
  std::memcpy(out + weights.size(), bias.data(), sizeof(double) * bias.size());
}

void DenseLayer::read_params(const double* in) {
  std::memcpy(weights.data(), in, sizeof(double) * weights.size());
  std::memcpy(bias.data(), in + weights.size(), sizeof(double) * bias.size());
}

void DenseLayer::write_grads(double* out) const {
  std::memcpy(out, grad_weights.data(), sizeof(double) * grad_weights.size());
  std::memcpy(out + grad_weights.size(), grad_bias.data(),
              sizeof(double) * grad_bias.size());
}

void DenseLayer::zero_grad() {
  grad_weights.setZero();
  grad_bias.setZero();
}

void DenseLayer::init(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / weights.rows()));
  for (int i = 0; i < weights.size(); ++i) weights.data()[i] = gauss(rng);
  bias.setZero();
}

std::unique_ptr<Layer> DenseLayer::clone() const {
  return std::make_unique<DenseLayer>(*this);
}

// ---------------------------------------------------------------------------
// ReLU

Matrix ReluLayer::forward(const Matrix& x) {
  cached_input = x;
  return x.cwiseMax(0.0);
}

Matrix ReluLayer::backward(const Matrix& dy) {
  return (cached_input.array() > 0.0).select(dy, Matrix::Zero(dy.rows(), dy.cols()));
}

std::unique_ptr<Layer> ReluLayer::clone() const {
  return std::make_unique<ReluLayer>(*this);
}

// ---------------------------------------------------------------------------
// Conv2d (3x3, pad 1, stride 1)

Conv2dLayer::Conv2dLayer(int height, int width, int in_channels,
                         int out_channels)
    : height(height),
      width(width),
      in_channels(in_channels),
      out_channels(out_channels),
      weights(Matrix::Zero(in_channels * kKernel * kKernel, out_channels)),
      bias(Vector::Zero(out_channels)),
      grad_weights(Matrix::Zero(in_channels * kKernel * kKernel, out_channels)),
      grad_bias(Vector::Zero(out_channels)) {}

Matrix Conv2dLayer::im2col(const Matrix& x) const {
  const int n = static_cast<int>(x.rows());
  const int hw = height * width;
  Matrix cols = Matrix::Zero(static_cast<long>(n) * hw,
                             in_channels * kKernel * kKernel);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < in_channels; ++c) {
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const int col_idx = (c * kKernel + ky) * kKernel + kx;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= height) continue;
            for (int xx = 0; xx < width; ++xx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= width) continue;
              cols(static_cast<long>(s) * hw + y * width + xx, col_idx) =
                  x(s, c * hw + sy * width + sx);
            }
          }
        }
      }
    }
  }
  return cols;
}

Matrix Conv2dLayer::forward(const Matrix& x) {
  require(x.cols() == static_cast<long>(in_channels) * height * width,
          "Conv2dLayer: input width mismatch");
  cached_input = x;
  const int n = static_cast<int>(x.rows());
  const int hw = height * width;
  Matrix cols = im2col(x);
  Matrix y = cols * weights;  // [n*hw x out_c]
  y.rowwise() += bias.transpose();
  Matrix out(n, static_cast<long>(out_channels) * hw);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < out_channels; ++c) {
      for (int p = 0; p < hw; ++p) {
        out(s, c * hw + p) = y(static_cast<long>(s) * hw + p, c);
      }
    }
  }
  return out;
}

Matrix Conv2dLayer::backward(const Matrix& dy) {
  const int n = static_cast<int>(dy.rows());
  const int hw = height * width;
  Matrix dy_r(static_cast<long>(n) * hw, out_channels);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < out_channels; ++c) {
      for (int p = 0; p < hw; ++p) {
        dy_r(static_cast<long>(s) * hw + p, c) = dy(s, c * hw + p);
      }
    }
  }
  Matrix cols = im2col(cached_input);
  grad_weights += cols.transpose() * dy_r;
  grad_bias += dy_r.colwise().sum().transpose();

  // col2im scatter of dcols into dx.
  Matrix dcols = dy_r * weights.transpose();  // [n*hw x in_c*9]
  Matrix dx = Matrix::Zero(n, cached_input.cols());
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < in_channels; ++c) {
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const int col_idx = (c * kKernel + ky) * kKernel + kx;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= height) continue;
            for (int xx = 0; xx < width; ++xx) {
              const int sx = xx + kx - 1;
              if (sx < 0 || sx >= width) continue;
              dx(s, c * hw + sy * width + sx) +=
                  dcols(static_cast<long>(s) * hw + y * width + xx, col_idx);
            }
          }
        }
      }
    }
  }
  return dx;
}

int Conv2dLayer::param_count() const {
  return static_cast<int>(weights.size() + bias.size());
}

void Conv2dLayer::write_params(double* out) const {
  std::memcpy(out, weights.data(), sizeof(double) * weights.size());
  std::memcpy(out + weights.size(), bias.data(), sizeof(double) * bias.size());
}

void Conv2dLayer::read_params(const double* in) {
  std::memcpy(weights.data(), in, sizeof(double) * weights.size());
  std::memcpy(bias.data(), in + weights.size(), sizeof(double) * bias.size());
}

void Conv2dLayer::write_grads(double* out) const {
  std::memcpy(out, grad_weights.data(), sizeof(double) * grad_weights.size());
  std::memcpy(out + grad_weights.size(), grad_bias.data(),
              sizeof(double) * grad_bias.size());
}

void Conv2dLayer::zero_grad() {
  grad_weights.setZero();
  grad_bias.setZero();
}

void Conv2dLayer::init(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / weights.rows()));
  for (int i = 0; i < weights.size(); ++i) weights.data()[i] = gauss(rng);
  bias.setZero();
}

std::unique_ptr<Layer> Conv2dLayer::clone() const {
  return std::make_unique<Conv2dLayer>(*this);
}

// ---------------------------------------------------------------------------
// AvgPool 2x2

AvgPool2Layer::AvgPool2Layer(int height, int width, int channels)
    : height(height), width(width), channels(channels) {
  require(height % 2 == 0 && width % 2 == 0, "AvgPool2Layer: odd input size");
}

Matrix AvgPool2Layer::forward(const Matrix& x) {
  const int n = static_cast<int>(x.rows());
  const int oh = height / 2, ow = width / 2;
  Matrix out(n, static_cast<long>(channels) * oh * ow);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const int base = c * height * width;
          const double v = x(s, base + (2 * y) * width + 2 * xx) +
                           x(s, base + (2 * y) * width + 2 * xx + 1) +
                           x(s, base + (2 * y + 1) * width + 2 * xx) +
                           x(s, base + (2 * y + 1) * width + 2 * xx + 1);
          out(s, c * oh * ow + y * ow + xx) = v / 4.0;
        }
      }
    }
  }
  return out;
}

Matrix AvgPool2Layer::backward(const Matrix& dy) {
  const int n = static_cast<int>(dy.rows());
  const int oh = height / 2, ow = width / 2;
  Matrix dx = Matrix::Zero(n, static_cast<long>(channels) * height * width);
  for (int s = 0; s < n; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          const double g = dy(s, c * oh * ow + y * ow + xx) / 4.0;
          const int base = c * height * width;
          dx(s, base + (2 * y) * width + 2 * xx) = g;
          dx(s, base + (2 * y) * width + 2 * xx + 1) = g;
          dx(s, base + (2 * y + 1) * width + 2 * xx) = g;
          dx(s, base + (2 * y + 1) * width + 2 * xx + 1) = g;
        }
      }
    }
  }
  return dx;
}

std::unique_ptr<Layer> AvgPool2Layer::clone() const {
  return std::make_unique<AvgPool2Layer>(*this);
}

// ---------------------------------------------------------------------------
// Builders

Network make_conv4_encoder(int height, int width, int in_channels,
                           const std::vector<int>& channels, int dim,
                           std::uint64_t seed) {
  require(channels.size() == 4, "make_conv4_encoder: need 4 channel counts");
  require(height % 16 == 0 && width % 16 == 0,
          "make_conv4_encoder: spatial size must be divisible by 16");
  std::mt19937_64 rng(seed);
  Network net;
  int h = height, w = width, c = in_channels;
  for (int stage = 0; stage < 4; ++stage) {
    auto conv = std::make_unique<Conv2dLayer>(h, w, c, channels[stage]);
    conv->init(rng);
    net.add(std::move(conv));
    net.add(std::make_unique<ReluLayer>());
    net.add(std::make_unique<AvgPool2Layer>(h, w, channels[stage]));
    c = channels[stage];
    h /= 2;
    w /= 2;
  }
  auto head = std::make_unique<DenseLayer>(c * h * w, dim);
  head->init(rng);
  net.add(std::move(head));
  return net;
}

Network make_mlp(const std::vector<int>& widths, std::uint64_t seed) {
  require(widths.size() >= 2, "make_mlp: need at least input and output width");
  std::mt19937_64 rng(seed);
  Network net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    auto dense = std::make_unique<DenseLayer>(widths[i], widths[i + 1]);
    dense->init(rng);
    net.add(std::move(dense));
    if (i + 2 < widths.size()) net.add(std::make_unique<ReluLayer>());
  }
  return net;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits;
  for (int i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace encmark::nn
