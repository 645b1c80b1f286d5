// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Image containers, dataset generation/ingestion, the SimCLR augmentation
// pipeline, and trigger compositing. Pixel values live in [0,1]; rows handed
// to the tensor backend use the CHW layout expected by nn::Conv2dLayer.

#pragma once

#include "encmark/stats.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace encmark::data {

struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;  // CHW

  Image() = default;
  Image(int h, int w, int c)
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * w * c, 0.0) {}

  double& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t size() const { return pixels.size(); }
};

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;  // empty when unlabeled
  int num_classes = 0;

  std::size_t size() const { return images.size(); }
};

/// One sample per row, CHW flattened.
Matrix to_matrix(const std::vector<Image>& images);
Matrix to_matrix(const Dataset& ds, const std::vector<int>& indices);

/// Synthetic 10-class 32x32x3 dataset: class = base color + stripe
/// orientation/frequency, with per-sample phase, brightness, and noise.
/// Learnable by a contrastive encoder and linearly probe-able.
Dataset make_striped_dataset(int n, int num_classes, std::uint64_t seed);

/// Synthetic dataset whose labels depend on the XOR of two patch signs, so
/// they are not linearly separable from pixels or random features.
Dataset make_xor_dataset(int n, std::uint64_t seed);

/// CIFAR-10 packed binary batches (3073-byte records). Throws when the file
/// is missing or truncated.
Dataset load_cifar10_batch(const std::string& path, int limit = -1);

// ---------------------------------------------------------------------------
// Trigger

struct TriggerPattern {
  Image patch;
  int row = 0;
  int col = 0;
  double blend = 1.0;  // 1 = full overwrite, 0 = identity
};

/// Solid-white square patch at the bottom-right corner, full overwrite.
TriggerPattern default_trigger(int image_size, int patch_size = -1);

/// out = (1-blend)*image + blend*patch on the footprint, clamped to [0,1].
Image apply_trigger(const Image& image, const TriggerPattern& trigger);

// ---------------------------------------------------------------------------
// Augmentation (SimCLR recipe at 32x32: crop-resize, hflip, color jitter,
// random grayscale; no blur at this resolution)

struct AugmentConfig {
  int min_crop = 24;
  double flip_prob = 0.5;
  double jitter_strength = 0.4;
  double grayscale_prob = 0.2;
};

Image augment(const Image& image, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace encmark::data
