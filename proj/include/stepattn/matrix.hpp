#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepattn {

/// Raised when operand shapes are incompatible. The message names every shape involved.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> v);
  static Matrix row(std::span<const double> v);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row_span(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row_span(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  void fill(double v);
  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Kernels. All are pure and sum in sequential row-major order.

/// c = op(a)·op(b), op = transpose when the flag is set.
Matrix matmul(const Matrix& a, const Matrix& b, bool trans_a = false, bool trans_b = false);

/// c += alpha · op(a)·op(b). `c` must already have the result shape.
void gemm_acc(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b, double alpha, Matrix& c);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix sigmoid(const Matrix& a);
Matrix tanh(const Matrix& a);
/// Column-wise sum over rows: L×H -> 1×H.
Matrix sum_rows(const Matrix& a);
/// Side-by-side: [a | b]; rows must match.
Matrix concat_cols(const Matrix& a, const Matrix& b);
/// Stacked: [a ; b]; cols must match.
Matrix concat_rows(const Matrix& a, const Matrix& b);

/// Numerically stable softmax over every entry of `v` (any shape, treated as a flat vector).
Matrix softmax(const Matrix& v);
std::vector<double> softmax(std::span<const double> v);

double sigmoid(double x) noexcept;
bool all_finite(const Matrix& a) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace stepattn
