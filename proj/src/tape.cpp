#include "stepattn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stepattn {

Var Tape::push(Matrix value, bool requires_grad, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = requires_grad ? std::move(backprop) : Backprop{};
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Matrix* Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return &n.grad;
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Matrix out = stepattn::matmul(value(a), value(b), trans_a, trans_b);
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b, trans_a, trans_b](Tape& t, const Matrix& g) {
    if (Matrix* ga = t.grad_buffer(a)) {
      if (!trans_a)
        gemm_acc(g, t.value(b), false, !trans_b, 1.0, *ga);
      else
        gemm_acc(t.value(b), g, trans_b, true, 1.0, *ga);
    }
    if (Matrix* gb = t.grad_buffer(b)) {
      if (!trans_b)
        gemm_acc(t.value(a), g, !trans_a, false, 1.0, *gb);
      else
        gemm_acc(g, t.value(a), true, trans_a, 1.0, *gb);
    }
  });
}

Var Tape::add(Var a, Var b) {
  Matrix out = stepattn::add(value(a), value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                for (Var v : {a, b})
                  if (Matrix* gv = t.grad_buffer(v))
                    for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
              });
}

Var Tape::sub(Var a, Var b) {
  Matrix out = stepattn::sub(value(a), value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                if (Matrix* ga = t.grad_buffer(a))
                  for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                if (Matrix* gb = t.grad_buffer(b))
                  for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
              });
}

Var Tape::hadamard(Var a, Var b) {
  Matrix out = stepattn::hadamard(value(a), value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                if (Matrix* ga = t.grad_buffer(a)) {
                  const Matrix& vb = t.value(b);
                  for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * vb[i];
                }
                if (Matrix* gb = t.grad_buffer(b)) {
                  const Matrix& va = t.value(a);
                  for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * va[i];
                }
              });
}

Var Tape::scale(Var a, double s) {
  Matrix out = stepattn::scale(value(a), s);
  return push(std::move(out), requires_grad(a), [a, s](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
  });
}

Var Tape::sigmoid(Var a) {
  Matrix out = stepattn::sigmoid(value(a));
  const std::size_t self = nodes_.size();
  return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.nodes_[self].value;
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var Tape::tanh(Var a) {
  Matrix out = stepattn::tanh(value(a));
  const std::size_t self = nodes_.size();
  return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.nodes_[self].value;
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var Tape::abs(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  // Subgradient at exactly zero is 0.
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(a);
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double sgn = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
      (*ga)[i] += sgn * g[i];
    }
  });
}

Var Tape::sum_rows(Var a) {
  Matrix out = stepattn::sum_rows(value(a));
  return push(std::move(out), requires_grad(a), [a](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    const std::size_t cols = ga->cols();
    for (std::size_t r = 0; r < ga->rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*ga)(r, c) += g[c];
  });
}

Var Tape::sum(Var a) {
  double total = 0.0;
  for (double x : value(a).values()) total += x;
  return push(Matrix(1, 1, total), requires_grad(a), [a](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    for (double& x : ga->values()) x += g[0];
  });
}

Var Tape::concat_cols(Var a, Var b) {
  Matrix out = stepattn::concat_cols(value(a), value(b));
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                const std::size_t ca = t.value(a).cols();
                if (Matrix* ga = t.grad_buffer(a))
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < ca; ++c) (*ga)(r, c) += g(r, c);
                if (Matrix* gb = t.grad_buffer(b))
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < gb->cols(); ++c) (*gb)(r, c) += g(r, ca + c);
              });
}

Var Tape::stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no operands");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ShapeError("stack_rows: " + value(parts[0]).shape_str() +
                                                  " vs " + value(p).shape_str());
    rows += value(p).rows();
    rg = rg || requires_grad(p);
  }
  std::vector<double> v;
  v.reserve(rows * cols);
  for (Var p : parts) v.insert(v.end(), value(p).values().begin(), value(p).values().end());
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(Matrix(rows, cols, std::move(v)), rg, [ids = std::move(ids)](Tape& t, const Matrix& g) {
    std::size_t offset = 0;
    for (Var p : ids) {
      const std::size_t n = t.value(p).size();
      if (Matrix* gp = t.grad_buffer(p))
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[offset + i];
      offset += n;
    }
  });
}

Var Tape::softmax(Var a) {
  Matrix out = stepattn::softmax(value(a));
  const std::size_t self = nodes_.size();
  return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.nodes_[self].value;
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < y.size(); ++i) (*ga)[i] += y[i] * (g[i] - dot);
  });
}

Var Tape::add_bias(Var m, Var bias) {
  const Matrix& mv = value(m);
  const Matrix& bv = value(bias);
  if (bv.size() != mv.cols())
    throw ShapeError("add_bias: bias " + bv.shape_str() + " does not broadcast over " +
                     mv.shape_str());
  Matrix out = mv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  return push(std::move(out), requires_grad(m) || requires_grad(bias),
              [m, bias](Tape& t, const Matrix& g) {
                if (Matrix* gm = t.grad_buffer(m))
                  for (std::size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
                if (Matrix* gb = t.grad_buffer(bias))
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
              });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = value(a);
  if (begin + count > av.cols())
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + av.shape_str());
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  return push(std::move(out), requires_grad(a), [a, begin](Tape& t, const Matrix& g) {
    Matrix* ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, begin + c) += g(r, c);
  });
}

Var Tape::row(Var a, std::size_t r) {
  const Matrix& av = value(a);
  if (r >= av.rows())
    throw ShapeError("row: index " + std::to_string(r) + " out of range for " + av.shape_str());
  Matrix out = Matrix::row(av.row_span(r));
  return push(std::move(out), requires_grad(a), [a, r](Tape& t, const Matrix& g) {
    auto dst = t.grad_buffer(a)->row_span(r);
    for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
  });
}

void Tape::backward(Var root) {
  Node& rn = nodes_.at(root.id);
  if (rn.value.rows() != 1 || rn.value.cols() != 1)
    throw ShapeError("backward: root must be 1x1, got " + rn.value.shape_str());
  for (Node& n : nodes_)
    if (!n.is_leaf && !n.grad.empty()) n.grad.fill(0.0);
  if (!rn.requires_grad) return;
  Matrix* g = grad_buffer(root);
  (*g)[0] += 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backprop || n.grad.empty()) continue;
    n.backprop(*this, n.grad);
  }
}

void Tape::zero_grads() {
  for (Node& n : nodes_)
    if (!n.grad.empty()) n.grad.fill(0.0);
}

std::vector<Matrix> fd_gradient(const std::function<double()>& f, std::span<Matrix* const> params,
                                double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("fd_gradient: eps must be positive");
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (Matrix* p : params) {
    Matrix g(p->rows(), p->cols());
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = (*p)[i];
      (*p)[i] = saved + eps;
      const double up = f();
      (*p)[i] = saved - eps;
      const double down = f();
      (*p)[i] = saved;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(std::span<const Matrix> analytic, std::span<const Matrix> reference) {
  if (analytic.size() != reference.size())
    throw ShapeError("max_relative_error: " + std::to_string(analytic.size()) + " vs " +
                     std::to_string(reference.size()) + " matrices");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    require_same_shape(analytic[k], reference[k], "max_relative_error");
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      const double ref = reference[k][i];
      worst = std::max(worst, std::abs(analytic[k][i] - ref) / std::max(1.0, std::abs(ref)));
    }
  }
  return worst;
}

}  // namespace stepattn
