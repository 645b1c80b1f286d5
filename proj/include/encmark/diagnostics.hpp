// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Pilot-study diagnostics that separate OOD-clustered watermarks from
// entangled ones: intra-watermark cosine statistics, downstream
// prediction-bias statistics, and 2-D PCA scatter exports.

#pragma once

#include "encmark/adversary.hpp"
#include "encmark/shadow.hpp"

#include <string>
#include <vector>

namespace encmark::diag {

struct ClusterStats {
  double mean_pairwise_cos = 0.0;   // among watermark representations
  double clean_reference_cos = 0.0; // same statistic over paired clean samples
  double delta = 0.0;               // mean_pairwise_cos - clean_reference_cos
  int skipped_pairs = 0;
};

/// Mean cosine similarity over all unordered pairs of watermark-sample
/// representations; zero-norm representations are skipped.
ClusterStats intra_watermark_similarity(const shadow::EncoderFn& encoder,
                                        const shadow::ShadowDataset& shadow_set);

struct BiasStats {
  double top_class_fraction = 0.0;
  double mad = 0.0;  // median absolute deviation of per-class counts
  std::vector<int> class_histogram;
};

/// Histogram of argmax predictions over triggered samples. Requires at least
/// 20 samples.
BiasStats prediction_bias(adversary::DownstreamModel& model,
                          const std::vector<data::Image>& triggered);

/// Writes a 2-D PCA scatter of clean and watermark representations:
/// a CSV with header `x,y,label` (label in {clean, watermark}) and a PPM
/// raster rendering. An empty watermark set yields a clean-only scatter.
void export_pca_scatter(const shadow::EncoderFn& encoder,
                        const std::vector<data::Image>& clean_batch,
                        const std::vector<data::Image>& watermark_batch,
                        const std::string& csv_path,
                        const std::string& image_path);

// ---------------------------------------------------------------------------
// Minimal raster canvas shared with the harness plot emitter.

struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // 3 bytes per pixel, row-major

  Canvas(int w, int h)
      : width(w), height(h),
        rgb(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set_pixel(int x, int y, unsigned char r, unsigned char g,
                 unsigned char b);
  void draw_dot(int x, int y, int radius, unsigned char r, unsigned char g,
                unsigned char b);
  void save_ppm(const std::string& path) const;
};

}  // namespace encmark::diag
