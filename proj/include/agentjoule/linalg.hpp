#pragma once

// Dense least squares on tall, skinny column-major matrices.

#include <cstddef>
#include <span>
#include <vector>

namespace agentjoule::linalg {

// Column-major; column j occupies data[j*rows, (j+1)*rows).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

  std::span<double> column(std::size_t c) { return {data_.data() + c * rows_, rows_}; }
  std::span<const double> column(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }

  // Copy of this matrix without column `skip`.
  Matrix without_column(std::size_t skip) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct LeastSquares {
  std::vector<double> coefficients;      // 0 for dependent columns
  std::vector<double> residuals;         // y - X b
  std::vector<std::size_t> dependent;    // columns dropped as linearly dependent
  // Square upper-triangular factor restricted to the independent columns,
  // row-major, rank x rank.
  std::vector<double> r_factor;
  std::vector<std::size_t> independent;  // column index per row of r_factor
  double rss = 0.0;
};

// Householder QR without pivoting. A column whose component orthogonal to
// the preceding independent columns has norm <= rank_tol * its own norm is
// marked dependent and skipped; dependent columns get coefficient 0, so the
// residual is still the projection of y onto the span of X.
LeastSquares solve_least_squares(const Matrix& x, std::span<const double> y, double rank_tol = 1e-10);

// Diagonal of (R^T R)^{-1} for the upper-triangular factor of a full-rank fit.
std::vector<double> inverse_gram_diagonal(const LeastSquares& fit);

}  // namespace agentjoule::linalg
