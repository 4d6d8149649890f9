#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dpal/matrix.hpp"
#include "dpal/rng.hpp"

namespace dpal::numerics {

// Orthonormal component rows (p x d) with eigenvalues sorted non-increasing.
// Produced by pca_fit (centered) and by DP-PCA (uncentered, mean all zero).
struct PcaBasis {
  Matrix components;
  std::vector<double> eigenvalues;
  std::vector<double> mean;
};

struct Clustering {
  Matrix centroids;
  std::vector<std::size_t> assignment;
  double objective = 0.0;
  // Objective after each assignment step; non-increasing.
  std::vector<double> objective_trace;
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Pairs are sorted by eigenvalue, largest first; eigenvectors are the rows
// of `vectors` and each row has its largest-magnitude entry positive.
struct SymmetricEigen {
  std::vector<double> values;
  Matrix vectors;
};
SymmetricEigen eigen_symmetric(const Matrix& s);

// PCA via explicit covariance + Jacobi eigendecomposition. Components span the
// top-p eigenvectors of the centered covariance of X.
PcaBasis pca_fit(const Matrix& x, std::size_t p);

// (X - mean) * components^T.
Matrix project(const Matrix& x, const PcaBasis& basis);

// Lloyd's algorithm with k-means++ seeding. Stops at max_iter or when the
// relative objective change drops below 1e-6. An empty cluster is re-seeded
// at the point farthest from its assigned centroid.
Clustering kmeans(const Matrix& points, std::size_t n_cluster,
                  std::uint64_t seed, std::size_t max_iter = 100);

}  // namespace dpal::numerics
