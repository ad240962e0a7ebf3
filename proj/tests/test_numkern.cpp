#include <doctest.h>

#include <cmath>
#include <limits>

#include "stepattn/matrix.hpp"
#include "stepattn/rng.hpp"
#include "stepattn/tape.hpp"
#include "test_util.hpp"

using namespace stepattn;
using testutil::random_matrix;

TEST_CASE("matmul examples") {
  const Matrix a{{1, 2}, {3, 4}};
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK(matmul(Matrix{{1, 2}}, Matrix{{3}, {4}}) == Matrix{{11}});
  const Matrix z(2, 2);
  const Matrix b{{1, 2, 3}, {4, 5, 6}};
  CHECK(matmul(z, b) == Matrix(2, 3));
}

TEST_CASE("matmul shape error names both shapes") {
  const Matrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul transpose flags and (AB)^T = B^T A^T") {
  Rng rng(3);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  const Matrix ab = matmul(a, b);
  CHECK(max_abs_diff(transpose(ab), matmul(transpose(b), transpose(a))) < 1e-12);
  CHECK(max_abs_diff(matmul(transpose(a), b, true, false), ab) < 1e-12);
  CHECK(max_abs_diff(matmul(a, transpose(b), false, true), ab) < 1e-12);
  CHECK(max_abs_diff(matmul(transpose(a), transpose(b), true, true), ab) < 1e-12);
  CHECK(max_abs_diff(matmul(matmul(Matrix::identity(3), a), Matrix::identity(4)), a) == 0.0);

  Matrix c(3, 2, 1.0);
  gemm_acc(a, b, false, false, 2.0, c);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(1.0 + 2.0 * ab[i]));
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(11);
  const Matrix a = random_matrix(5, 7, rng), b = random_matrix(7, 6, rng);
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < 7; ++p) s += a(i, p) * b(p, j);
      CHECK(std::abs(c(i, j) - s) < 1e-12);
    }
}

TEST_CASE("softmax examples") {
  const auto a = softmax(std::vector<double>{0, 0});
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(0.5));
  const auto b = softmax(std::vector<double>{1000, 1000, 1000});
  for (double v : b) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);
  const auto c = softmax(std::vector<double>{0, std::log(3.0)});
  CHECK(std::abs(c[0] - 0.25) < 1e-15);
  CHECK(std::abs(c[1] - 0.75) < 1e-15);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), ShapeError);
  CHECK_THROWS_AS(softmax(Matrix()), ShapeError);
}

TEST_CASE("softmax properties on random vectors") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-20, 20);
    const auto w = softmax(v);
    double sum = 0;
    for (double x : w) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    std::vector<double> shifted = v;
    for (double& x : shifted) x += 123.5;
    const auto w2 = softmax(shifted);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(w[i] - w2[i]) < 1e-12);
  }
}

TEST_CASE("elementwise kernels") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(stepattn::tanh(Matrix{{0}})(0, 0) == 0.0);
  CHECK(sum_rows(Matrix{{1, 2}, {3, 4}}) == Matrix{{4, 6}});
  CHECK(add(Matrix{{1, 2}}, Matrix{{3, 4}}) == Matrix{{4, 6}});
  CHECK(sub(Matrix{{1, 2}}, Matrix{{3, 4}}) == Matrix{{-2, -2}});
  CHECK(hadamard(Matrix{{1, 2}}, Matrix{{3, 4}}) == Matrix{{3, 8}});
  CHECK(scale(Matrix{{1, 2}}, 3) == Matrix{{3, 6}});
  CHECK(concat_cols(Matrix{{1}, {2}}, Matrix{{3}, {4}}) == Matrix{{1, 3}, {2, 4}});
  CHECK(concat_rows(Matrix{{1, 2}}, Matrix{{3, 4}}) == Matrix{{1, 2}, {3, 4}});
  CHECK_THROWS_AS(add(Matrix(1, 2), Matrix(2, 1)), ShapeError);
  CHECK_THROWS_AS(hadamard(Matrix(1, 2), Matrix(1, 3)), ShapeError);
  CHECK_THROWS_AS(concat_cols(Matrix(1, 2), Matrix(2, 2)), ShapeError);
  CHECK_THROWS_AS(concat_rows(Matrix(1, 2), Matrix(1, 3)), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);

  const Matrix big{{-800, -30, 0, 30, 800}};
  const Matrix s = sigmoid(big), t = stepattn::tanh(big);
  CHECK(all_finite(s));
  for (double v : s.values()) CHECK((v >= 0.0 && v <= 1.0));
  for (double v : t.values()) CHECK((v >= -1.0 && v <= 1.0));
  CHECK(s(0, 1) > 0.0);
  CHECK(s(0, 1) < 0.5);
}

TEST_CASE("backward: product rule") {
  Tape tape;
  const Var x = tape.leaf(Matrix{{2}});
  const Var y = tape.leaf(Matrix{{3}});
  tape.backward(tape.hadamard(x, y));
  CHECK(tape.grad(x)(0, 0) == 3.0);
  CHECK(tape.grad(y)(0, 0) == 2.0);
}

TEST_CASE("backward: zero path gives zero gradient") {
  Tape tape;
  const Var v = tape.leaf(Matrix{{1, -2, 3}});
  const Var root = tape.sum(tape.sigmoid(tape.scale(v, 0.0)));
  tape.backward(root);
  for (double g : tape.grad(v).values()) CHECK(g == 0.0);
}

TEST_CASE("backward: MAE of a constant model gives +-1/N on the bias") {
  // pred = b for every sample; labels straddle b.
  const std::vector<double> labels{1.0, 5.0, 7.0, 2.0};
  Tape tape;
  const Var b = tape.leaf(Matrix{{4}});
  Var total = tape.constant(Matrix{{0}});
  for (double y : labels)
    total = tape.add(total, tape.abs(tape.sub(b, tape.constant(Matrix{{y}}))));
  tape.backward(tape.scale(total, 1.0 / labels.size()));
  double expected = 0;
  for (double y : labels) expected += (4 > y ? 1.0 : -1.0) / labels.size();
  CHECK(tape.grad(b)(0, 0) == doctest::Approx(expected));
}

TEST_CASE("backward: abs subgradient at zero is zero") {
  Tape tape;
  const Var x = tape.leaf(Matrix{{0.0}});
  tape.backward(tape.sum(tape.abs(x)));
  CHECK(tape.grad(x)(0, 0) == 0.0);
}

TEST_CASE("backward: non-scalar root is a shape error") {
  Tape tape;
  const Var x = tape.leaf(Matrix{{1, 2}});
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("backward: gradients accumulate across calls until zeroed") {
  Tape tape;
  const Var x = tape.leaf(Matrix{{3}});
  const Var root = tape.hadamard(x, x);
  tape.backward(root);
  CHECK(tape.grad(x)(0, 0) == 6.0);
  tape.backward(root);
  CHECK(tape.grad(x)(0, 0) == 12.0);
  tape.zero_grads();
  tape.backward(root);
  CHECK(tape.grad(x)(0, 0) == 6.0);
}

TEST_CASE("backward: fan-out accumulates and root grad is one") {
  Tape tape;
  const Var x = tape.leaf(Matrix{{1.5, -0.5}});
  const Var a = tape.sigmoid(x);
  const Var root = tape.sum(tape.add(a, tape.hadamard(a, x)));
  tape.backward(root);
  CHECK(tape.grad(root)(0, 0) == 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const double xv = tape.value(x)[i];
    const double s = sigmoid(xv), ds = s * (1 - s);
    CHECK(tape.grad(x)[i] == doctest::Approx(ds + ds * xv + s));
  }
}

TEST_CASE("fd_gradient examples") {
  Matrix x{{3.0}};
  std::vector<Matrix*> ps{&x};
  const auto g = fd_gradient([&] { return x(0, 0) * x(0, 0); }, ps, 1e-5);
  CHECK(std::abs(g[0](0, 0) - 6.0) < 1e-8);
  CHECK(x(0, 0) == 3.0);

  Matrix y{{1, 2}, {3, 4}};
  std::vector<Matrix*> ps2{&y};
  const auto g2 = fd_gradient([] { return 42.0; }, ps2, 1e-5);
  for (double v : g2[0].values()) CHECK(v == 0.0);
}

TEST_CASE("every tape op matches finite differences") {
  Rng rng(17);
  Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), c = random_matrix(3, 4, rng);
  Matrix bias = random_matrix(1, 4, rng);
  const Matrix weights = random_matrix(3, 2, rng);
  auto build = [&](Tape& t, std::vector<Var>& leaves) {
    const Var va = t.leaf(a), vb = t.leaf(b), vc = t.leaf(c), vbias = t.leaf(bias);
    leaves = {va, vb, vc, vbias};
    const Var m1 = t.matmul(va, vb);                              // 3x2
    const Var m2 = t.matmul(vc, vb, false, false);                // 3x2
    const Var m3 = t.matmul(va, vc, true, false);                 // 4x4
    const Var m4 = t.matmul(vb, va, true, true);                  // 2x3
    const Var sum1 = t.hadamard(t.add(m1, m2), t.constant(weights));
    const Var g = t.tanh(t.add_bias(va, vbias));
    const Var sm = t.softmax(t.sum_rows(g));
    const Var rows = t.stack_rows(std::vector<Var>{t.row(g, 2), t.row(g, 0)});
    const Var cat = t.concat_cols(t.slice_cols(rows, 1, 2), t.sigmoid(t.slice_cols(rows, 0, 1)));
    Var root = t.sum(sum1);
    root = t.add(root, t.scale(t.sum(m3), 0.1));
    root = t.add(root, t.sum(t.hadamard(m4, m4)));
    root = t.add(root, t.sum(t.hadamard(sm, t.constant(Matrix{{1, 2, 3, 4}}))));
    root = t.add(root, t.sum(t.abs(t.sub(cat, t.constant(Matrix(2, 3, 5.0))))));
    return root;
  };
  Tape tape;
  std::vector<Var> leaves;
  const Var root = build(tape, leaves);
  tape.backward(root);
  std::vector<Matrix> analytic;
  for (Var v : leaves) analytic.push_back(tape.grad(v));
  std::vector<Matrix*> ps{&a, &b, &c, &bias};
  const auto fd = fd_gradient(
      [&] {
        Tape t;
        std::vector<Var> l;
        return t.value(build(t, l))(0, 0);
      },
      ps, 1e-5);
  CHECK(max_relative_error(analytic, fd) < 1e-7);
}

TEST_CASE("max_relative_error uses max(1, |reference|)") {
  const std::vector<Matrix> a{Matrix{{1.0, 200.0}}}, b{Matrix{{1.5, 100.0}}};
  CHECK(max_relative_error(a, b) == doctest::Approx(1.0));
  const std::vector<Matrix> c{Matrix{{0.001}}}, d{Matrix{{0.0}}};
  CHECK(max_relative_error(c, d) == doctest::Approx(0.001));
}
