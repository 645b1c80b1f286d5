// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic numerical kernels shared by every other module: cosine
// similarity, sliced Wasserstein distance, one-sided paired t-tests with a
// margin, k-means, and PCA projection. All functions are pure; randomness
// enters only through explicit seeds.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace encmark {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace stats {

/// J unit-norm projection directions, reproducible from the seed.
struct ProjectionSet {
  Matrix directions;  // [J x d], each row unit norm
  std::uint64_t seed = 0;

  static ProjectionSet generate(int num_directions, int dim, std::uint64_t seed);
};

/// Result of a one-sided paired t-test (H1: mean(a-b) > margin).
struct TestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  int n_pairs = 0;
  double margin = 0.0;
  bool degenerate = false;  // zero variance of the differences
};

struct KMeansResult {
  Matrix centers;           // [k x d]
  std::vector<int> labels;  // size n
  double inertia = 0.0;     // sum of squared distances to assigned centers
  int iterations = 0;
};

double cosine_similarity(const Vector& a, const Vector& b);

/// Sorted-projection Monte-Carlo estimator of the sliced Wasserstein
/// distance. Requires equal batch sizes; per-direction distances are
/// normalized by sqrt(n) so the value is batch-size independent.
double sliced_wasserstein(const Matrix& x, const Matrix& y, const ProjectionSet& p);

TestResult paired_t_test_greater(std::span<const double> a,
                                 std::span<const double> b, double margin);

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed,
                    int max_iterations = 300, double tol = 1e-6);

/// Projection of mean-centered rows onto the top-k principal directions.
/// Component signs follow the largest-magnitude-entry-positive convention.
Matrix pca_project(const Matrix& x, int k);

/// Uniform subsample of n rows without replacement, order-preserving.
Matrix subsample_rows(const Matrix& x, int n, std::uint64_t seed);

}  // namespace stats
}  // namespace encmark
