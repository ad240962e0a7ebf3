#include "stepattn/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stepattn {

namespace {

std::string shapes(const char* op, const Matrix& a, const Matrix& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
  return os.str();
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "Matrix: " << values_.size() << " values cannot fill shape " << shape_str();
    throw ShapeError(os.str());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Matrix Matrix::row(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Matrix::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw ShapeError(shapes(op, a, b));
}

void gemm_acc(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b, double alpha,
              Matrix& c) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (k != kb) throw ShapeError(shapes("matmul", a, b));
  if (c.rows() != m || c.cols() != n) {
    throw ShapeError("matmul: output " + c.shape_str() + " does not match product of " +
                     a.shape_str() + " and " + b.shape_str());
  }
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* pc = c.values().data();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();

  // Loop orders keep the innermost index contiguous in memory for each layout.
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = pc + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * pa[i * lda + p];
        if (av == 0.0) continue;
        const double* brow = pb + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = pb + j * ldb;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        pc[i * n + j] += alpha * acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* arow = pa + p * lda;
      const double* brow = pb + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = alpha * arow[i];
        if (av == 0.0) continue;
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += pa[p * lda + i] * pb[j * ldb + p];
        pc[i * n + j] += alpha * acc;
      }
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  const std::size_t k = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  if (k != kb) throw ShapeError(shapes("matmul", a, b));
  Matrix c(m, n);
  gemm_acc(a, b, trans_a, trans_b, 1.0, c);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace {

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = f(a[i], b[i]);
  return c;
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = f(a[i]);
  return c;
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Matrix sub(const Matrix& a, const Matrix& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Matrix hadamard(const Matrix& a, const Matrix& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}
Matrix scale(const Matrix& a, double s) {
  return map(a, [s](double x) { return x * s; });
}

double sigmoid(double x) noexcept {
  // Branching keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& a) {
  return map(a, [](double x) { return sigmoid(x); });
}
Matrix tanh(const Matrix& a) {
  return map(a, [](double x) { return std::tanh(x); });
}

Matrix sum_rows(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row_span(i);
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += r[j];
  }
  return s;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError(shapes("concat_cols", a, b));
  Matrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row_span(i);
    std::copy(a.row_span(i).begin(), a.row_span(i).end(), out.begin());
    std::copy(b.row_span(i).begin(), b.row_span(i).end(), out.begin() + a.cols());
  }
  return c;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError(shapes("concat_rows", a, b));
  std::vector<double> v(a.values().begin(), a.values().end());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(v));
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax: empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

Matrix softmax(const Matrix& v) {
  return Matrix(v.rows(), v.cols(), softmax(v.values()));
}

bool all_finite(const Matrix& a) noexcept {
  for (double x : a.values())
    if (!std::isfinite(x)) return false;
  return true;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace stepattn
