// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace encmark::data {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Matrix to_matrix(const std::vector<Image>& images) {
  require(!images.empty(), "to_matrix: empty image list");
  const auto d = images.front().size();
  Matrix out(static_cast<long>(images.size()), static_cast<long>(d));
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].size() == d, "to_matrix: inconsistent image sizes");
    for (std::size_t j = 0; j < d; ++j) out(static_cast<long>(i), static_cast<long>(j)) = images[i].pixels[j];
  }
  return out;
}

Matrix to_matrix(const Dataset& ds, const std::vector<int>& indices) {
  std::vector<Image> subset;
  subset.reserve(indices.size());
  for (int idx : indices) subset.push_back(ds.images.at(idx));
  return to_matrix(subset);
}

Dataset make_striped_dataset(int n, int num_classes, std::uint64_t seed) {
  require(n > 0 && num_classes >= 2, "make_striped_dataset: bad sizes");
  const int size = 32;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.04);

  // Fixed per-class base colors and stripe geometry.
  std::vector<std::array<double, 3>> colors(num_classes);
  std::vector<double> angles(num_classes), freqs(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    const double hue = 2.0 * M_PI * c / num_classes;
    colors[c] = {0.5 + 0.45 * std::cos(hue), 0.5 + 0.45 * std::cos(hue + 2.1),
                 0.5 + 0.45 * std::cos(hue + 4.2)};
    angles[c] = M_PI * c / num_classes;
    freqs[c] = 2.0 + (c % 5);
  }

  Dataset ds;
  ds.num_classes = num_classes;
  for (int i = 0; i < n; ++i) {
    const int label = i % num_classes;
    Image img(size, size, 3);
    const double phase = 2.0 * M_PI * unit(rng);
    const double brightness = 0.85 + 0.3 * unit(rng);
    const double ca = std::cos(angles[label]), sa = std::sin(angles[label]);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double t = freqs[label] * 2.0 * M_PI * (ca * x + sa * y) / size;
        const double wave = 0.55 + 0.35 * std::sin(t + phase);
        for (int ch = 0; ch < 3; ++ch) {
          img.at(ch, y, x) =
              clamp01(colors[label][ch] * wave * brightness + noise(rng));
        }
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset make_xor_dataset(int n, std::uint64_t seed) {
  require(n > 0, "make_xor_dataset: bad size");
  const int size = 32;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> level(0, 4);
  std::normal_distribution<double> noise(0.0, 0.05);

  Dataset ds;
  ds.num_classes = 10;
  for (int i = 0; i < n; ++i) {
    const int a = coin(rng), b = coin(rng);
    const int sub = level(rng);
    // Label folds the XOR bit with an independent 5-level factor: 10 classes
    // whose decision structure is not linear in pixel space.
    const int label = (a ^ b) * 5 + sub;
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.5 + noise(rng);
        if (y < 16 && x < 16) v += (a ? 0.25 : -0.25);
        if (y >= 16 && x >= 16) v += (b ? 0.25 : -0.25);
        v += 0.02 * sub * std::sin(0.7 * x) * std::sin(0.9 * y);
        for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = clamp01(v);
      }
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset load_cifar10_batch(const std::string& path, int limit) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_cifar10_batch: cannot open " + path);
  constexpr int kRecord = 3073;
  Dataset ds;
  ds.num_classes = 10;
  std::vector<unsigned char> buf(kRecord);
  while (in.read(reinterpret_cast<char*>(buf.data()), kRecord)) {
    Image img(32, 32, 3);
    for (std::size_t i = 0; i < 3072; ++i) img.pixels[i] = buf[1 + i] / 255.0;
    ds.images.push_back(std::move(img));
    ds.labels.push_back(buf[0]);
    if (limit > 0 && static_cast<int>(ds.images.size()) >= limit) break;
  }
  if (ds.images.empty()) {
    throw std::runtime_error("load_cifar10_batch: no records in " + path);
  }
  return ds;
}

TriggerPattern default_trigger(int image_size, int patch_size) {
  if (patch_size <= 0) patch_size = image_size >= 224 ? 24 : 6;
  TriggerPattern t;
  t.patch = Image(patch_size, patch_size, 3);
  std::fill(t.patch.pixels.begin(), t.patch.pixels.end(), 1.0);
  t.row = image_size - patch_size;
  t.col = image_size - patch_size;
  t.blend = 1.0;
  return t;
}

Image apply_trigger(const Image& image, const TriggerPattern& trigger) {
  require(trigger.patch.channels == image.channels,
          "apply_trigger: channel mismatch");
  require(trigger.row >= 0 && trigger.col >= 0 &&
              trigger.row + trigger.patch.height <= image.height &&
              trigger.col + trigger.patch.width <= image.width,
          "apply_trigger: footprint out of bounds");
  require(trigger.blend >= 0.0 && trigger.blend <= 1.0,
          "apply_trigger: blend outside [0,1]");
  Image out = image;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < trigger.patch.height; ++y) {
      for (int x = 0; x < trigger.patch.width; ++x) {
        const double src = image.at(c, trigger.row + y, trigger.col + x);
        const double pat = trigger.patch.at(c, y, x);
        out.at(c, trigger.row + y, trigger.col + x) =
            clamp01((1.0 - trigger.blend) * src + trigger.blend * pat);
      }
    }
  }
  return out;
}

namespace {

double bilinear(const Image& img, int c, double y, double x) {
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, img.height - 1);
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
         fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1));
}

}  // namespace

Image augment(const Image& image, const AugmentConfig& cfg,
              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Random crop-resize.
  std::uniform_int_distribution<int> crop_dist(cfg.min_crop, image.height);
  const int crop = crop_dist(rng);
  std::uniform_int_distribution<int> off(0, image.height - crop);
  const int oy = off(rng), ox = off(rng);
  Image out(image.height, image.width, image.channels);
  const double scale = static_cast<double>(crop) / image.height;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        out.at(c, y, x) = bilinear(image, c, oy + y * scale, ox + x * scale);
      }
    }
  }

  // Horizontal flip.
  if (unit(rng) < cfg.flip_prob) {
    for (int c = 0; c < out.channels; ++c) {
      for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width / 2; ++x) {
          std::swap(out.at(c, y, x), out.at(c, y, out.width - 1 - x));
        }
      }
    }
  }

  // Per-channel brightness/contrast jitter.
  const double s = cfg.jitter_strength;
  for (int c = 0; c < out.channels; ++c) {
    const double gain = 1.0 + s * (2.0 * unit(rng) - 1.0);
    const double shift = 0.5 * s * (2.0 * unit(rng) - 1.0);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        out.at(c, y, x) = clamp01(gain * (out.at(c, y, x) - 0.5) + 0.5 + shift);
      }
    }
  }

  // Random grayscale.
  if (out.channels == 3 && unit(rng) < cfg.grayscale_prob) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const double g = 0.299 * out.at(0, y, x) + 0.587 * out.at(1, y, x) +
                         0.114 * out.at(2, y, x);
        out.at(0, y, x) = out.at(1, y, x) = out.at(2, y, x) = g;
      }
    }
  }
  return out;
}

}  // namespace encmark::data
