#include <algorithm>
#include <cmath>
#include <string>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"
#include "dpal/numerics.hpp"

namespace dpal::numerics {
namespace {

// Rotates rows of an eigenvector accumulator and the target matrix until the
// off-diagonal mass is negligible. d <= a few hundred, so O(d^3) sweeps are
// fine.
void jacobi_rotate(Matrix& a, Matrix& v) {
  const std::size_t d = a.rows();
  const std::size_t max_sweeps = 64;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) off += a(i, j) * a(i, j);
    }
    double diag = 0.0;
    for (std::size_t i = 0; i < d; ++i) diag += a(i, i) * a(i, i);
    if (off <= 1e-26 * std::max(diag, 1e-300)) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double tau = (aqq - app) / (2.0 * apq);
        // Stable tangent of the rotation angle.
        const double t = (tau >= 0.0)
                             ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                             : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
}

void apply_sign_convention(Matrix& rows) {
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    double* r = rows.row(i);
    std::size_t arg = 0;
    double best = std::fabs(r[0]);
    for (std::size_t j = 1; j < rows.cols(); ++j) {
      if (std::fabs(r[j]) > best) {
        best = std::fabs(r[j]);
        arg = j;
      }
    }
    if (r[arg] < 0.0) {
      kernels::scal(-1.0, r, rows.cols());
    }
  }
}

}  // namespace

SymmetricEigen eigen_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) {
    throw DimensionError("eigen_symmetric: matrix must be square");
  }
  const std::size_t d = s.rows();
  Matrix a = s;
  Matrix v(d, d);
  for (std::size_t i = 0; i < d; ++i) v(i, i) = 1.0;
  jacobi_rotate(a, v);

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a(i, i) != a(j, j)) return a(i, i) > a(j, j);
    return i < j;
  });

  SymmetricEigen out;
  out.values.resize(d);
  out.vectors = Matrix(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    const std::size_t col = order[r];
    out.values[r] = a(col, col);
    for (std::size_t k = 0; k < d; ++k) out.vectors(r, k) = v(k, col);
  }
  apply_sign_convention(out.vectors);
  return out;
}

PcaBasis pca_fit(const Matrix& x, std::size_t p) {
  if (p > x.cols()) {
    throw DimensionError("pca_fit: p=" + std::to_string(p) + " exceeds cols=" +
                         std::to_string(x.cols()));
  }
  if (x.rows() < 2) {
    throw ParameterError("pca_fit: need at least 2 rows");
  }
  const std::size_t d = x.cols();
  std::vector<double> mean = column_means(x);
  Matrix centered(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.row(r);
    double* cr = centered.row(r);
    for (std::size_t j = 0; j < d; ++j) cr[j] = xr[j] - mean[j];
  }
  Matrix cov = gram(centered);
  kernels::scal(1.0 / static_cast<double>(x.rows() - 1), cov.data(),
                cov.size());

  SymmetricEigen eig = eigen_symmetric(cov);
  PcaBasis basis;
  basis.mean = std::move(mean);
  basis.eigenvalues.assign(eig.values.begin(), eig.values.begin() + p);
  // Clamp the tiny negative values Jacobi can leave on rank-deficient input.
  for (double& v : basis.eigenvalues) {
    if (v < 0.0 && v > -1e-9) v = 0.0;
  }
  basis.components = Matrix(p, d);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      basis.components(i, j) = eig.vectors(i, j);
    }
  }
  return basis;
}

Matrix project(const Matrix& x, const PcaBasis& basis) {
  if (x.cols() != basis.components.cols()) {
    throw DimensionError("project: X has " + std::to_string(x.cols()) +
                         " cols, basis expects " +
                         std::to_string(basis.components.cols()));
  }
  Matrix shifted(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.row(r);
    double* sr = shifted.row(r);
    for (std::size_t j = 0; j < x.cols(); ++j) sr[j] = xr[j] - basis.mean[j];
  }
  return matmul_transpose_b(shifted, basis.components);
}

}  // namespace dpal::numerics
