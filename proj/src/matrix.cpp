#include "dpal/matrix.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"

namespace dpal {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw ParameterError("Matrix: non-finite entry on construction");
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    const double* ai = a.row(i);
    for (std::size_t l = 0; l < a.cols(); ++l) {
      kernels::axpy(ai[l], b.row(l), ci, n);
    }
  }
  return c;
}

Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transpose_b: widths " +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      ci[j] = kernels::dot(a.row(i), b.row(j), a.cols());
    }
  }
  return c;
}

Matrix gram(const Matrix& x) {
  const std::size_t d = x.cols();
  Matrix s(d, d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      kernels::axpy(xr[i], xr, s.row(i), d);
    }
  }
  return s;
}

std::vector<double> column_means(const Matrix& x) {
  std::vector<double> mean(x.cols(), 0.0);
  if (x.rows() == 0) return mean;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    kernels::axpy(1.0, x.row(r), mean.data(), x.cols());
  }
  const double inv = 1.0 / static_cast<double>(x.rows());
  kernels::scal(inv, mean.data(), mean.size());
  return mean;
}

}  // namespace dpal
