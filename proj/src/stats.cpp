// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0

#include "encmark/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace encmark::stats {

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

ProjectionSet ProjectionSet::generate(int num_directions, int dim,
                                      std::uint64_t seed) {
  require(num_directions > 0 && dim > 0, "ProjectionSet: J and d must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix dirs(num_directions, dim);
  for (int j = 0; j < num_directions; ++j) {
    double norm2 = 0.0;
    do {
      for (int i = 0; i < dim; ++i) dirs(j, i) = gauss(rng);
      norm2 = dirs.row(j).squaredNorm();
    } while (norm2 < 1e-24);
    dirs.row(j) /= std::sqrt(norm2);
  }
  return ProjectionSet{std::move(dirs), seed};
}

double cosine_similarity(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  require(na > 0.0 && nb > 0.0, "cosine_similarity: zero-norm input");
  return a.dot(b) / (na * nb);
}

double sliced_wasserstein(const Matrix& x, const Matrix& y,
                          const ProjectionSet& p) {
  require(x.rows() > 0 && y.rows() > 0, "sliced_wasserstein: empty batch");
  require(x.cols() == y.cols(), "sliced_wasserstein: dimension mismatch");
  require(p.directions.cols() == x.cols(),
          "sliced_wasserstein: projection dimension mismatch");
  require(x.rows() == y.rows(), "sliced_wasserstein: batch sizes must match");

  const int n = static_cast<int>(x.rows());
  const int num_dirs = static_cast<int>(p.directions.rows());

  // [n x J] projections, one column per direction.
  Matrix px = x * p.directions.transpose();
  Matrix py = y * p.directions.transpose();

  double mean_sq = 0.0;
  std::vector<double> u(n), v(n);
  for (int j = 0; j < num_dirs; ++j) {
    for (int i = 0; i < n; ++i) {
      u[i] = px(i, j);
      v[i] = py(i, j);
    }
    std::sort(u.begin(), u.end());
    std::sort(v.begin(), v.end());
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = u[i] - v[i];
      sq += d * d;
    }
    mean_sq += sq / n;  // ||sorted(u)-sorted(v)||_2^2 / n
  }
  mean_sq /= num_dirs;
  return std::sqrt(mean_sq);
}

TestResult paired_t_test_greater(std::span<const double> a,
                                 std::span<const double> b, double margin) {
  require(a.size() == b.size(), "paired_t_test_greater: unequal lengths");
  require(a.size() >= 2, "paired_t_test_greater: need at least 2 pairs");

  const int n = static_cast<int>(a.size());
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i] - margin;
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - margin - mean;
    var += d * d;
  }
  var /= (n - 1);

  TestResult r;
  r.n_pairs = n;
  r.margin = margin;
  if (var <= 0.0) {
    // Constant differences: never claim piracy from zero-variance data.
    // Differences below the margin retain H0 outright (p = 1), everything
    // else collapses to the neutral t = 0 convention.
    r.degenerate = true;
    r.t_statistic = 0.0;
    r.p_value = mean < 0.0 ? 1.0 : 0.5;
    return r;
  }
  r.t_statistic = mean / std::sqrt(var / n);
  boost::math::students_t dist(n - 1);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t_statistic));
  return r;
}

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed,
                    int max_iterations, double tol) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  require(k >= 1 && k <= n, "kmeans: need 1 <= k <= n");
  require(x.allFinite(), "kmeans: non-finite entries");

  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Matrix centers(k, d);
  std::vector<double> dist2(n, std::numeric_limits<double>::max());
  {
    std::uniform_int_distribution<int> pick(0, n - 1);
    centers.row(0) = x.row(pick(rng));
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d2 = (x.row(i) - centers.row(c - 1)).squaredNorm();
        dist2[i] = std::min(dist2[i], d2);
        total += dist2[i];
      }
      int next = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += dist2[i];
          if (acc >= target) {
            next = i;
            break;
          }
        }
      } else {
        next = pick(rng);
      }
      centers.row(c) = x.row(next);
    }
  }

  KMeansResult result;
  result.labels.assign(n, 0);
  double prev_inertia = std::numeric_limits<double>::max();
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Assignment.
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d2 = (x.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d2 = (x.row(i) - centers.row(c)).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = c;
        }
      }
      result.labels[i] = best;
      inertia += best_d2;
    }

    // Update; an emptied cluster takes the point farthest from its center.
    Matrix sums = Matrix::Zero(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(result.labels[i]) += x.row(i);
      counts[result.labels[i]]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        int far = 0;
        double far_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d2 =
              (x.row(i) - centers.row(result.labels[i])).squaredNorm();
          if (d2 > far_d2) {
            far_d2 = d2;
            far = i;
          }
        }
        centers.row(c) = x.row(far);
      }
    }

    result.iterations = iter + 1;
    result.inertia = inertia;
    if (prev_inertia < std::numeric_limits<double>::max()) {
      const double rel = (prev_inertia - inertia) /
                         std::max(prev_inertia, 1e-300);
      if (rel >= 0.0 && rel < tol) break;
    }
    prev_inertia = inertia;
  }

  // Final assignment against the last center update.
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d2 = (x.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double d2 = (x.row(i) - centers.row(c)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = c;
      }
    }
    result.labels[i] = best;
    inertia += best_d2;
  }
  result.inertia = inertia;
  result.centers = std::move(centers);
  return result;
}

Matrix pca_project(const Matrix& x, int k) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  require(n >= 2, "pca_project: need at least 2 rows");
  require(k >= 1 && k <= d, "pca_project: need 1 <= k <= d");

  Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered / (n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  // Eigenvalues come back ascending; take the trailing k columns.
  Matrix components(d, k);
  for (int j = 0; j < k; ++j) {
    Vector v = solver.eigenvectors().col(d - 1 - j);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    components.col(j) = v;
  }
  return centered * components;
}

Matrix subsample_rows(const Matrix& x, int n, std::uint64_t seed) {
  require(n >= 0 && n <= x.rows(), "subsample_rows: n out of range");
  std::vector<int> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  Matrix out(n, x.cols());
  for (int i = 0; i < n; ++i) out.row(i) = x.row(idx[i]);
  return out;
}

}  // namespace encmark::stats
