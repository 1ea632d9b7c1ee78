#include "ccl/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: value count " + std::to_string(data_.size()) +
                     " does not match shape " + std::to_string(rows_) + "x" +
                     std::to_string(cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) && a.values() == b.values();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_fail("add", a, b);
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += b.values()[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_fail("sub", a, b);
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] -= b.values()[i];
  return out;
}

Matrix mul_elem(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_fail("mul_elem", a, b);
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= b.values()[i];
  return out;
}

Matrix scale(const Matrix& a, double c) {
  Matrix out = a;
  for (double& v : out.values()) v *= c;
  return out;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) shape_fail("add_row_broadcast", x, row);
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += row(0, j);
  return out;
}

Matrix tanh_elem(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = std::tanh(v);
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_fail("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias) {
  if (x.cols() != w.rows()) shape_fail("affine", x, w);
  if (bias.rows() != 1 || bias.cols() != w.cols()) shape_fail("affine bias", w, bias);
  return add_row_broadcast(matmul(x, w), bias);
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) sq += x(i, j) * x(i, j);
    const double norm = std::sqrt(sq);
    if (norm < kEpsFloor) {
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = 0.0;
    } else {
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / norm;
    }
  }
  return out;
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b, bool eps_floor) {
  if (a.cols() != b.cols()) shape_fail("cosine_similarity_matrix", a, b);
  if (a.cols() < 1) throw ShapeError("cosine_similarity_matrix: empty feature dimension");
  if (!eps_floor) {
    auto check = [](const Matrix& m, const char* which) {
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) sq += m(i, j) * m(i, j);
        if (std::sqrt(sq) < kEpsFloor) {
          throw DegenerateInputError("cosine_similarity_matrix: zero-norm row " +
                                     std::to_string(i) + " in " + which);
        }
      }
    };
    check(a, "a");
    check(b, "b");
  }
  return matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b));
}

Matrix row_softmax(const Matrix& s, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParamError("row_softmax: temperature must be positive");
  }
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double max_z = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.cols(); ++j) max_z = std::max(max_z, s(i, j) / temperature);
    double denom = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j) {
      const double e = std::exp(s(i, j) / temperature - max_z);
      out(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) /= denom;
  }
  return out;
}

}  // namespace ccl
