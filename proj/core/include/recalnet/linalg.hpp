#pragma once

#include <cstddef>
#include <vector>

#include "recalnet/error.hpp"

namespace recalnet {

using Vector = std::vector<double>;

// Dense row-major double matrix with explicit shape. All operations that
// combine shapes check them; there is no broadcasting.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }
  bool empty() const { return d_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return d_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * cols_ + j]; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  double* row(std::size_t i) { return d_.data() + i * cols_; }
  const double* row(std::size_t i) const { return d_.data() + i * cols_; }

  std::vector<double>& storage() { return d_; }
  const std::vector<double>& storage() const { return d_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> d_;
};

// W*x (+ b). Throws InvariantError naming both shapes on mismatch.
Vector affine(const Matrix& w, const Vector& x, const Vector& b);
Vector affine(const Matrix& w, const Vector& x);

// y += W^T * g, without materializing the transpose.
void add_matvec_transposed(const Matrix& w, const Vector& g, Vector& y);

// W += a * (g outer x), the rank-1 update of every backward pass.
void add_outer(Matrix& w, const Vector& g, const Vector& x, double a = 1.0);

inline void add_scaled(Vector& y, const Vector& x, double a) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(const Vector& a, const Vector& b);

}  // namespace recalnet
