#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace survwright {

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const;

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix select_cols(std::span<const std::size_t> indices) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = A x
std::vector<double> multiply(const Matrix& a, std::span<const double> x);

// Lower Cholesky factor of a symmetric positive definite matrix. Factorization
// fails (returns false) when a pivot drops to or below `rel_pivot_tol` times the
// largest diagonal entry.
struct Cholesky {
  Matrix lower;
  bool ok = false;

  static Cholesky factor(const Matrix& spd, double rel_pivot_tol = 1e-12);
  std::vector<double> solve(std::span<const double> b) const;
  Matrix inverse() const;
};

}  // namespace survwright
