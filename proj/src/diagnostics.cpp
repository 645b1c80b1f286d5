// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace encmark::diag {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

/// Mean cosine over all unordered row pairs, skipping zero-norm rows.
std::pair<double, int> mean_pairwise_cosine(const Matrix& reps) {
  double sum = 0.0;
  int pairs = 0, skipped = 0;
  for (int i = 0; i < reps.rows(); ++i) {
    if (reps.row(i).norm() <= 0.0) {
      ++skipped;
      continue;
    }
    for (int j = i + 1; j < reps.rows(); ++j) {
      if (reps.row(j).norm() <= 0.0) continue;
      sum += stats::cosine_similarity(reps.row(i), reps.row(j));
      ++pairs;
    }
  }
  if (pairs == 0) {
    throw std::runtime_error("mean_pairwise_cosine: no usable pairs");
  }
  return {sum / pairs, skipped};
}

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

ClusterStats intra_watermark_similarity(
    const shadow::EncoderFn& encoder,
    const shadow::ShadowDataset& shadow_set) {
  require(shadow_set.size() >= 2,
          "intra_watermark_similarity: need at least 2 shadow pairs");
  const Matrix r_wm = encoder(data::to_matrix(shadow_set.triggered));
  const Matrix r_c = encoder(data::to_matrix(shadow_set.clean));

  ClusterStats out;
  auto [wm_cos, wm_skipped] = mean_pairwise_cosine(r_wm);
  auto [c_cos, c_skipped] = mean_pairwise_cosine(r_c);
  out.mean_pairwise_cos = wm_cos;
  out.clean_reference_cos = c_cos;
  out.delta = wm_cos - c_cos;
  out.skipped_pairs = wm_skipped + c_skipped;
  return out;
}

BiasStats prediction_bias(adversary::DownstreamModel& model,
                          const std::vector<data::Image>& triggered) {
  require(triggered.size() >= 20,
          "prediction_bias: need at least 20 triggered samples");
  const Matrix probs = model.predict(data::to_matrix(triggered));
  const int classes = static_cast<int>(probs.cols());

  BiasStats out;
  out.class_histogram.assign(classes, 0);
  for (int i = 0; i < probs.rows(); ++i) {
    int arg = 0;
    probs.row(i).maxCoeff(&arg);
    ++out.class_histogram[arg];
  }
  const int total = static_cast<int>(triggered.size());
  out.top_class_fraction =
      static_cast<double>(
          *std::max_element(out.class_histogram.begin(),
                            out.class_histogram.end())) /
      total;

  std::vector<double> counts(out.class_histogram.begin(),
                             out.class_histogram.end());
  const double med = median_of(counts);
  std::vector<double> deviations;
  deviations.reserve(counts.size());
  for (double c : counts) deviations.push_back(std::abs(c - med));
  out.mad = median_of(std::move(deviations));
  return out;
}

void Canvas::set_pixel(int x, int y, unsigned char r, unsigned char g,
                       unsigned char b) {
  if (x < 0 || x >= width || y < 0 || y >= height) return;
  const std::size_t at = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[at] = r;
  rgb[at + 1] = g;
  rgb[at + 2] = b;
}

void Canvas::draw_dot(int x, int y, int radius, unsigned char r,
                      unsigned char g, unsigned char b) {
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) {
        set_pixel(x + dx, y + dy, r, g, b);
      }
    }
  }
}

void Canvas::save_ppm(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void export_pca_scatter(const shadow::EncoderFn& encoder,
                        const std::vector<data::Image>& clean_batch,
                        const std::vector<data::Image>& watermark_batch,
                        const std::string& csv_path,
                        const std::string& image_path) {
  require(!clean_batch.empty(), "export_pca_scatter: empty clean batch");
  const int n_clean = static_cast<int>(clean_batch.size());
  const int n_wm = static_cast<int>(watermark_batch.size());

  std::vector<data::Image> all = clean_batch;
  all.insert(all.end(), watermark_batch.begin(), watermark_batch.end());
  const Matrix reps = encoder(data::to_matrix(all));
  const Matrix xy = stats::pca_project(reps, 2);

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "x,y,label\n";
  csv.precision(17);
  for (int i = 0; i < xy.rows(); ++i) {
    csv << xy(i, 0) << ',' << xy(i, 1) << ','
        << (i < n_clean ? "clean" : "watermark") << '\n';
  }

  // Raster rendering: clean = blue, watermark = red.
  const int size = 480, pad = 20;
  Canvas canvas(size, size);
  const double min_x = xy.col(0).minCoeff(), max_x = xy.col(0).maxCoeff();
  const double min_y = xy.col(1).minCoeff(), max_y = xy.col(1).maxCoeff();
  const double span_x = std::max(max_x - min_x, 1e-12);
  const double span_y = std::max(max_y - min_y, 1e-12);
  for (int i = 0; i < xy.rows(); ++i) {
    const int px = pad + static_cast<int>((xy(i, 0) - min_x) / span_x *
                                          (size - 2 * pad));
    const int py = size - pad -
                   static_cast<int>((xy(i, 1) - min_y) / span_y *
                                    (size - 2 * pad));
    if (i < n_clean) {
      canvas.draw_dot(px, py, 2, 40, 80, 220);
    } else {
      canvas.draw_dot(px, py, 2, 220, 50, 40);
    }
  }
  canvas.save_ppm(image_path);
  (void)n_wm;
}

}  // namespace encmark::diag
