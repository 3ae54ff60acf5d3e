#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "rulerec/errors.hpp"

namespace rulerec {

// Probabilities coming out of sigmoid() are clamped into
// [kProbEps, 1 - kProbEps] so downstream logs stay finite.
inline constexpr double kProbEps = 1e-12;

// Dense row-major matrix of doubles. A 1 x n matrix doubles as a row vector;
// biases are stored that way.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::initializer_list<double> init)
      : rows(r), cols(c), data(init) {
    if (data.size() != static_cast<size_t>(r) * c)
      throw ShapeError("matrix initializer has " + std::to_string(data.size()) +
                       " values, expected " + std::to_string(static_cast<size_t>(r) * c));
  }

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  Matrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// C = A^T * B, with A and B sharing their row dimension.
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("matmul_at_b: " + a.shape_str() + " vs " + b.shape_str());
  Matrix c(a.cols, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      double* crow = c.row(k);
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// C = A * B^T, with A and B sharing their column dimension.
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw ShapeError("matmul_a_bt: " + a.shape_str() + " vs " + b.shape_str());
  Matrix c(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
  return c;
}

inline Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

// Elementwise logistic, clamped away from {0,1}. sigmoid(0) stays exactly 0.5.
inline Matrix sigmoid(const Matrix& x) {
  Matrix y = x;
  for (double& v : y.data) {
    double s = 1.0 / (1.0 + std::exp(-v));
    if (s < kProbEps) s = kProbEps;
    if (s > 1.0 - kProbEps) s = 1.0 - kProbEps;
    v = s;
  }
  return y;
}

inline double sigmoid(double x) {
  double s = 1.0 / (1.0 + std::exp(-x));
  if (s < kProbEps) s = kProbEps;
  if (s > 1.0 - kProbEps) s = 1.0 - kProbEps;
  return s;
}

// [A | B] column-wise.
inline Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("concat_cols: " + a.shape_str() + " vs " + b.shape_str());
  Matrix c(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    const double* br = b.row(i);
    double* cr = c.row(i);
    for (int j = 0; j < a.cols; ++j) cr[j] = ar[j];
    for (int j = 0; j < b.cols; ++j) cr[a.cols + j] = br[j];
  }
  return c;
}

// Adds a 1 x cols bias row to every row of x.
inline void add_row_inplace(Matrix& x, const Matrix& bias) {
  if (bias.rows != 1 || bias.cols != x.cols)
    throw ShapeError("add_row_inplace: " + x.shape_str() + " += " + bias.shape_str());
  for (int i = 0; i < x.rows; ++i) {
    double* xr = x.row(i);
    for (int j = 0; j < x.cols; ++j) xr[j] += bias.data[j];
  }
}

inline Matrix colsum(const Matrix& x) {
  Matrix s(1, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    for (int j = 0; j < x.cols; ++j) s.data[j] += xr[j];
  }
  return s;
}

// Zeroes grad wherever the matching pre-activation is <= 0 (relu', with
// derivative 0 at the kink).
inline void relu_mask_inplace(Matrix& grad, const Matrix& pre) {
  require_same_shape(grad, pre, "relu_mask_inplace");
  for (size_t i = 0; i < grad.data.size(); ++i)
    if (pre.data[i] <= 0.0) grad.data[i] = 0.0;
}

// y += alpha * x
inline void axpy_inplace(Matrix& y, double alpha, const Matrix& x) {
  require_same_shape(y, x, "axpy_inplace");
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline void scale_inplace(Matrix& x, double alpha) {
  for (double& v : x.data) v *= alpha;
}

inline double max_abs(const Matrix& x) {
  double m = 0.0;
  for (double v : x.data) m = std::max(m, std::fabs(v));
  return m;
}

inline bool all_finite(const Matrix& x) {
  for (double v : x.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

}  // namespace rulerec
