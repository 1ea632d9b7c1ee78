#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace ccl {

// Floor applied to norms and log arguments throughout the library.
inline constexpr double kEpsFloor = 1e-12;

// Dense row-major matrix of doubles. All numeric kernels in this library
// operate on this type; single precision appears only in the file format.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool bitwise_equal(const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix mul_elem(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix add_row_broadcast(const Matrix& x, const Matrix& row);
Matrix tanh_elem(const Matrix& x);
Matrix concat_cols(const Matrix& a, const Matrix& b);

// x * w + bias, with bias a 1 x k row broadcast over the n rows.
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias);

// Each output row has unit norm; rows with norm below kEpsFloor come out
// all-zero instead of exploding.
Matrix l2_normalize_rows(const Matrix& x);

// Entry (i,j) = <a_i, b_j> / (|a_i| |b_j|). With eps_floor (the default),
// rows below the norm floor yield zero similarities; without it they throw.
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b, bool eps_floor = true);

// Per-row softmax of s / temperature, computed with max-subtraction.
Matrix row_softmax(const Matrix& s, double temperature);

}  // namespace ccl
