#include "recalnet/linalg.hpp"

namespace recalnet {

namespace {
void check_matvec(const Matrix& w, const Vector& x) {
  if (w.cols() != x.size())
    throw InvariantError(msg("affine: matrix is ", w.rows(), "x", w.cols(),
                             " but vector has length ", x.size()));
}
}  // namespace

Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
  check_matvec(w, x);
  if (b.size() != w.rows())
    throw InvariantError(msg("affine: bias has length ", b.size(),
                             " but matrix is ", w.rows(), "x", w.cols()));
  Vector out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* wi = w.row(i);
    double acc = b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) acc += wi[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector affine(const Matrix& w, const Vector& x) {
  check_matvec(w, x);
  Vector out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* wi = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += wi[j] * x[j];
    out[i] = acc;
  }
  return out;
}

void add_matvec_transposed(const Matrix& w, const Vector& g, Vector& y) {
  if (w.rows() != g.size() || w.cols() != y.size())
    throw InvariantError(msg("add_matvec_transposed: matrix is ", w.rows(), "x",
                             w.cols(), ", g has length ", g.size(),
                             ", y has length ", y.size()));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double gi = g[i];
    if (gi == 0.0) continue;
    const double* wi = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += wi[j] * gi;
  }
}

void add_outer(Matrix& w, const Vector& g, const Vector& x, double a) {
  if (w.rows() != g.size() || w.cols() != x.size())
    throw InvariantError(msg("add_outer: matrix is ", w.rows(), "x", w.cols(),
                             ", g has length ", g.size(), ", x has length ",
                             x.size()));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double gi = a * g[i];
    if (gi == 0.0) continue;
    double* wi = w.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j) wi[j] += gi * x[j];
  }
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size())
    throw InvariantError(
        msg("dot: lengths differ, ", a.size(), " vs ", b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace recalnet
