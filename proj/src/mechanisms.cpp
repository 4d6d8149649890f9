#include <cmath>
#include <cstddef>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"
#include "dpal/privacy.hpp"

namespace dpal::privacy {

model::GradientSet clip_gradient(const model::GradientSet& g, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw ParameterError("clip_gradient: clip_norm must be > 0");
  }
  const double norm = std::sqrt(model::flat_sqnorm(g));
  if (norm <= clip_norm) return g;
  const double scale = clip_norm / norm;
  model::GradientSet out = g;
  for (model::Layer& layer : out) {
    kernels::scal(scale, layer.weights.data(), layer.weights.size());
    kernels::scal(scale, layer.biases.data(), layer.biases.size());
  }
  return out;
}

double gaussian_mechanism_sigma(double epsilon, double delta) {
  if (!(epsilon > 0.0)) {
    throw ParameterError("gaussian_mechanism_sigma: epsilon must be > 0");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ParameterError("gaussian_mechanism_sigma: delta must be in (0, 1)");
  }
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

std::vector<double> laplace_mechanism(const std::vector<double>& value,
                                      double epsilon, Rng& rng,
                                      PrivacyLedger& ledger) {
  if (!(epsilon > 0.0)) {
    throw ParameterError("laplace_mechanism: epsilon must be > 0");
  }
  const double scale = kLaplaceCountSensitivity / epsilon;
  std::vector<double> noised(value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    noised[i] = value[i] + rng.laplace(scale);
  }
  ledger.append_laplace(epsilon, "laplace_mechanism");
  return noised;
}

numerics::PcaBasis dp_pca(const Matrix& embeddings, std::size_t p,
                          double epsilon, double delta, Rng& rng,
                          PrivacyLedger& ledger) {
  if (!(epsilon > 0.0)) throw ParameterError("dp_pca: epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ParameterError("dp_pca: delta must be in (0, 1)");
  }
  const std::size_t d = embeddings.cols();
  if (p < 1 || p > d) {
    throw ParameterError("dp_pca: p must be in [1, cols]");
  }
  if (embeddings.rows() == 0) {
    throw ParameterError("dp_pca: empty input");
  }

  // Rescale each row to l2 norm <= 1 so one row changes the second-moment
  // matrix by at most 1 in Frobenius norm.
  Matrix normalized = embeddings;
  for (std::size_t i = 0; i < normalized.rows(); ++i) {
    const double norm = std::sqrt(kernels::nrm2sq(normalized.row(i), d));
    if (norm > 1.0) {
      kernels::scal(1.0 / norm, normalized.row(i), d);
    }
  }

  // Uncentered second moment (the sum, not the average: its sensitivity is
  // the 1 the noise std is calibrated to; eigenvectors are scale-invariant).
  Matrix moment = gram(normalized);
  const double noise_std = gaussian_mechanism_sigma(epsilon, delta);
  // Sample the upper triangle including the diagonal, mirror the rest, so the
  // perturbed matrix stays exactly symmetric.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double noise = noise_std * rng.normal();
      moment(i, j) += noise;
      if (j != i) moment(j, i) = moment(i, j);
    }
  }

  const numerics::SymmetricEigen eigen = numerics::eigen_symmetric(moment);
  numerics::PcaBasis basis;
  basis.components = Matrix(p, d);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      basis.components(i, j) = eigen.vectors(i, j);
    }
  }
  basis.eigenvalues.assign(eigen.values.begin(), eigen.values.begin() + p);
  basis.mean.assign(d, 0.0);

  ledger.append_gaussian(epsilon, delta, "dp_pca");
  return basis;
}

}  // namespace dpal::privacy
