#pragma once

#include <cstddef>
#include <vector>

namespace dpal {

// Dense row-major matrix of doubles. Entries supplied at construction are
// checked to be finite; internal factories that fill a zero matrix afterwards
// are responsible for what they write.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  const std::vector<double>& values() const { return data_; }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B with A (m x k), B (k x n). Accumulates along k in fixed order so
// every kernel variant produces bit-identical results.
Matrix matmul(const Matrix& a, const Matrix& b);

// C = A * B^T with A (m x d), B (p x d); entry (i, j) = dot(A.row(i), B.row(j)).
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);

// X^T * X accumulated row by row; result is (d x d) and exactly symmetric.
Matrix gram(const Matrix& x);

// Column means of X, length cols(X).
std::vector<double> column_means(const Matrix& x);

}  // namespace dpal
