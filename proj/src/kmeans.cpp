#include <cmath>
#include <limits>
#include <string>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"
#include "dpal/numerics.hpp"

namespace dpal::numerics {
namespace {

// Nearest centroid by squared distance, ties to the lowest index.
std::size_t nearest_centroid(const double* point, const Matrix& centroids,
                             double* dist_out) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = kernels::sqdist(point, centroids.row(c), centroids.cols());
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist_out != nullptr) *dist_out = best_d;
  return best;
}

Matrix seed_kmeans_pp(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  Matrix centroids(k, dim);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.uniform_int(n);
  for (std::size_t j = 0; j < dim; ++j) centroids(0, j) = points(first, j);

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = kernels::sqdist(points.row(i), centroids.row(c - 1), dim);
      if (d < dist[i]) dist[i] = d;
      total += dist[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
    } else {
      // All remaining points coincide with an existing centroid.
      pick = rng.uniform_int(n);
    }
    for (std::size_t j = 0; j < dim; ++j) centroids(c, j) = points(pick, j);
  }
  return centroids;
}

}  // namespace

Clustering kmeans(const Matrix& points, std::size_t n_cluster,
                  std::uint64_t seed, std::size_t max_iter) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (n_cluster < 1 || n_cluster > n) {
    throw ParameterError("kmeans: n_cluster=" + std::to_string(n_cluster) +
                         " out of range for " + std::to_string(n) + " points");
  }

  Rng rng(seed);
  Clustering result;
  result.centroids = seed_kmeans_pp(points, n_cluster, rng);
  result.assignment.assign(n, 0);

  std::vector<double> point_dist(n, 0.0);
  double prev_objective = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      result.assignment[i] =
          nearest_centroid(points.row(i), result.centroids, &point_dist[i]);
      objective += point_dist[i];
    }
    result.objective_trace.push_back(objective);

    const bool converged =
        std::isfinite(prev_objective) &&
        std::fabs(prev_objective - objective) <=
            1e-6 * std::max(prev_objective, 1e-300);
    prev_objective = objective;
    if (converged) break;

    // Update step: centroid = mean of its points.
    Matrix sums(n_cluster, dim);
    std::vector<std::size_t> counts(n_cluster, 0);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::axpy(1.0, points.row(i), sums.row(result.assignment[i]), dim);
      ++counts[result.assignment[i]];
    }
    std::vector<bool> reseeded(n, false);
    for (std::size_t c = 0; c < n_cluster; ++c) {
      if (counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < dim; ++j) {
          result.centroids(c, j) = sums(c, j) * inv;
        }
      } else {
        // Re-seed at the point farthest from its assigned centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          if (reseeded[i]) continue;
          if (point_dist[i] > far_d) {
            far_d = point_dist[i];
            far = i;
          }
        }
        reseeded[far] = true;
        for (std::size_t j = 0; j < dim; ++j) {
          result.centroids(c, j) = points(far, j);
        }
      }
    }
  }

  // Final assignment pass so the returned labels match the returned centroids.
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    result.assignment[i] = nearest_centroid(points.row(i), result.centroids, &d);
    objective += d;
  }
  result.objective = objective;
  result.objective_trace.push_back(objective);
  return result;
}

}  // namespace dpal::numerics
