#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gsfda/errors.hpp"

namespace gsfda {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles, the sole numeric carrier in the library.
// All math is 64-bit; public operations keep entries finite and throw
// NumericError otherwise.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
      throw ShapeError("matrix data length does not match rows*cols");
  }

  // 1xN matrix from a vector.
  static Matrix row(const Vector& v) { return Matrix(1, v.size(), v); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  Vector row_vec(std::size_t r) const {
    return Vector(row_ptr(r), row_ptr(r) + cols_);
  }
  void set_row(std::size_t r, const double* src) {
    for (std::size_t c = 0; c < cols_; ++c) data_[r * cols_ + c] = src[c];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a (m x k) * b (k x n) -> (m x n). Throws ShapeError on mismatch,
// NumericError if the product is not finite.
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T (k x m) * b (k x n) -> (m x n), without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a (m x k) * b^T (n x k) -> (m x n).
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// u.v / (|u||v|), clamped to [-1, 1]; 0 if either norm is below 1e-12.
double cosine_similarity(const Vector& u, const Vector& v);
double cosine_similarity(const double* u, const double* v, std::size_t n);

double dot(const Vector& u, const Vector& v);

// In-place helpers; all check shapes.
void add_inplace(Matrix& a, const Matrix& b);
void axpy(Matrix& y, double alpha, const Matrix& x);  // y += alpha * x
void scale_inplace(Matrix& a, double alpha);
Vector col_sums(const Matrix& m);

void ensure_finite(const Matrix& m, const std::string& what);
void ensure_finite(double v, const std::string& what);

}  // namespace gsfda
