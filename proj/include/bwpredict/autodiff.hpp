#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records operations in creation order, which is already a
// topological order, so backward() is a single reverse sweep.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bwpredict/error.hpp"

namespace bwp::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Rank-2 tensor with an accumulating gradient buffer of the same shape.
struct Tensor {
  std::vector<std::size_t> shape{0, 0};
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, values(rows * cols, fill), grad(rows * cols, 0.0) {}

  std::size_t rows() const { return shape[0]; }
  std::size_t cols() const { return shape[1]; }
  std::size_t size() const { return values.size(); }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  void zero_grad() { grad.assign(values.size(), 0.0); }
};

class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Tape() { nodes_.reserve(256); }

  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
    require(values.size() == rows * cols, ErrorKind::shape, "constant: value count does not match shape");
    return push(rows, cols, std::move(values), {});
  }

  // Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var param(Tensor& p) {
    Var v = push(p.rows(), p.cols(), p.values, {});
    nodes_[v.id].param = &p;
    return v;
  }

  std::size_t rows(Var v) const { return nodes_[v.id].rows; }
  std::size_t cols(Var v) const { return nodes_[v.id].cols; }
  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value.at(0); }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    require(cols(a) == rows(b), ErrorKind::shape,
            "matmul: (" + dims(a) + ") x (" + dims(b) + ")");
    const std::size_t n = rows(a), m = cols(b);
    std::vector<double> out(n * m);
    MatrixMap(out.data(), n, m).noalias() = cmap(a) * cmap(b);
    return push(n, m, std::move(out), [a, b](Tape& t, std::size_t self) {
      const ConstMatrixMap g(t.nodes_[self].grad.data(), t.rows(Var{self}), t.cols(Var{self}));
      t.gmap(a).noalias() += g * t.cmap(b).transpose();
      t.gmap(b).noalias() += t.cmap(a).transpose() * g;
    });
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    require(cols(a) == cols(b), ErrorKind::shape, "matmul_nt: (" + dims(a) + ") x (" + dims(b) + ")^T");
    const std::size_t n = rows(a), m = rows(b);
    std::vector<double> out(n * m);
    MatrixMap(out.data(), n, m).noalias() = cmap(a) * cmap(b).transpose();
    return push(n, m, std::move(out), [a, b](Tape& t, std::size_t self) {
      const ConstMatrixMap g(t.nodes_[self].grad.data(), t.rows(Var{self}), t.cols(Var{self}));
      t.gmap(a).noalias() += g * t.cmap(b);
      t.gmap(b).noalias() += g.transpose() * t.cmap(a);
    });
  }

  Var add(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), ErrorKind::shape, "add: (" + dims(a) + ") + (" + dims(b) + ")");
    std::vector<double> out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push(rows(a), cols(a), std::move(out), [a, b](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.nodes_[a.id].grad;
      auto& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
    });
  }

  // a (n x c) + row (1 x c) broadcast over rows.
  Var add_row(Var a, Var row) {
    require(rows(row) == 1 && cols(row) == cols(a), ErrorKind::shape,
            "add_row: (" + dims(a) + ") + (" + dims(row) + ")");
    const std::size_t n = rows(a), c = cols(a);
    std::vector<double> out = value(a);
    const auto& vr = value(row);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) out[r * c + j] += vr[j];
    return push(n, c, std::move(out), [a, row, n, c](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.nodes_[a.id].grad;
      auto& gr = t.nodes_[row.id].grad;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) {
          ga[r * c + j] += g[r * c + j];
          gr[j] += g[r * c + j];
        }
    });
  }

  // Elementwise product.
  Var mul(Var a, Var b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), ErrorKind::shape, "mul: (" + dims(a) + ") * (" + dims(b) + ")");
    std::vector<double> out = value(a);
    const auto& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(rows(a), cols(a), std::move(out), [a, b](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& va = t.nodes_[a.id].value;
      const auto& vb = t.nodes_[b.id].value;
      auto& ga = t.nodes_[a.id].grad;
      auto& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
        gb[i] += g[i] * va[i];
      }
    });
  }

  // Elementwise product with a constant (dropout masks, fixed scalings).
  Var mul_const(Var a, std::vector<double> factor) {
    require(factor.size() == value(a).size(), ErrorKind::shape, "mul_const: mask size mismatch");
    std::vector<double> out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor[i];
    return push(rows(a), cols(a), std::move(out), [a, factor = std::move(factor)](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor[i];
    });
  }

  Var sigmoid(Var a) {
    std::vector<double> out = value(a);
    for (double& x : out) x = 1.0 / (1.0 + std::exp(-x));
    return push(rows(a), cols(a), std::move(out), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      auto& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }

  Var tanh(Var a) {
    std::vector<double> out = value(a);
    for (double& x : out) x = std::tanh(x);
    return push(rows(a), cols(a), std::move(out), [a](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& y = t.nodes_[self].value;
      auto& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }

  // Columns [begin, end) of a.
  Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    require(begin < end && end <= cols(a), ErrorKind::shape, "slice_cols: range outside (" + dims(a) + ")");
    const std::size_t n = rows(a), c = cols(a), w = end - begin;
    std::vector<double> out(n * w);
    const auto& va = value(a);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < w; ++j) out[r * w + j] = va[r * c + begin + j];
    return push(n, w, std::move(out), [a, begin, n, c, w](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      auto& ga = t.nodes_[a.id].grad;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < w; ++j) ga[r * c + begin + j] += g[r * w + j];
    });
  }

  // mean((pred - target)^2) as a 1 x 1 node.
  Var mse(Var pred, std::vector<double> target) {
    require(target.size() == value(pred).size(), ErrorKind::shape, "mse: target size mismatch");
    const auto& p = value(pred);
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - target[i]) * (p[i] - target[i]);
    const double n = static_cast<double>(p.size());
    return push(1, 1, {acc / n}, [pred, target = std::move(target), n](Tape& t, std::size_t self) {
      const double g = t.nodes_[self].grad[0];
      const auto& p = t.nodes_[pred.id].value;
      auto& gp = t.nodes_[pred.id].grad;
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - target[i]) / n;
    });
  }

  // Time-axis convolution of `steps` (w nodes of B x m, oldest first) with k
  // filters of length w (filters: k x w, no padding). Output B x (m*k) where
  // column i*k + j holds sum_l steps[l][b, i] * filters[j, l].
  Var temporal_conv(std::span<const Var> steps, Var filters) {
    const std::size_t w = steps.size();
    require(w >= 1 && cols(filters) == w, ErrorKind::shape,
            "temporal_conv: filter length " + std::to_string(cols(filters)) + " != window " + std::to_string(w));
    const std::size_t B = rows(steps[0]), m = cols(steps[0]), k = rows(filters);
    for (const auto& s : steps)
      require(rows(s) == B && cols(s) == m, ErrorKind::shape, "temporal_conv: inconsistent step shapes");
    std::vector<double> out(B * m * k, 0.0);
    const auto& f = value(filters);
    for (std::size_t l = 0; l < w; ++l) {
      const auto& h = value(steps[l]);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          const double hv = h[b * m + i];
          double* o = &out[(b * m + i) * k];
          for (std::size_t j = 0; j < k; ++j) o[j] += hv * f[j * w + l];
        }
    }
    std::vector<Var> ids(steps.begin(), steps.end());
    return push(B, m * k, std::move(out), [ids = std::move(ids), filters, B, m, k, w](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& f = t.nodes_[filters.id].value;
      auto& gf = t.nodes_[filters.id].grad;
      for (std::size_t l = 0; l < w; ++l) {
        const auto& h = t.nodes_[ids[l].id].value;
        auto& gh = t.nodes_[ids[l].id].grad;
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < m; ++i) {
            const double* gi = &g[(b * m + i) * k];
            double acc = 0;
            for (std::size_t j = 0; j < k; ++j) {
              acc += gi[j] * f[j * w + l];
              gf[j * w + l] += gi[j] * h[b * m + i];
            }
            gh[b * m + i] += acc;
          }
      }
    });
  }

  // Per-row bilinear scores: hc is B x (m*k), u is B x k; out[b, i] = sum_j hc[b, i*k+j] * u[b, j].
  Var row_bilinear(Var hc, Var u, std::size_t m, std::size_t k) {
    const std::size_t B = rows(hc);
    require(cols(hc) == m * k && rows(u) == B && cols(u) == k, ErrorKind::shape,
            "row_bilinear: (" + dims(hc) + ") with (" + dims(u) + ")");
    std::vector<double> out(B * m, 0.0);
    const auto& H = value(hc);
    const auto& U = value(u);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < k; ++j) acc += H[(b * m + i) * k + j] * U[b * k + j];
        out[b * m + i] = acc;
      }
    return push(B, m, std::move(out), [hc, u, B, m, k](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& H = t.nodes_[hc.id].value;
      const auto& U = t.nodes_[u.id].value;
      auto& gH = t.nodes_[hc.id].grad;
      auto& gU = t.nodes_[u.id].grad;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = g[b * m + i];
          for (std::size_t j = 0; j < k; ++j) {
            gH[(b * m + i) * k + j] += gi * U[b * k + j];
            gU[b * k + j] += gi * H[(b * m + i) * k + j];
          }
        }
    });
  }

  // Weighted row sum: alpha is B x m, hc is B x (m*k); out[b, j] = sum_i alpha[b, i] * hc[b, i*k+j].
  Var row_weighted_sum(Var alpha, Var hc, std::size_t m, std::size_t k) {
    const std::size_t B = rows(hc);
    require(cols(hc) == m * k && rows(alpha) == B && cols(alpha) == m, ErrorKind::shape,
            "row_weighted_sum: (" + dims(alpha) + ") with (" + dims(hc) + ")");
    std::vector<double> out(B * k, 0.0);
    const auto& H = value(hc);
    const auto& A = value(alpha);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < m; ++i) {
        const double a = A[b * m + i];
        for (std::size_t j = 0; j < k; ++j) out[b * k + j] += a * H[(b * m + i) * k + j];
      }
    return push(B, k, std::move(out), [alpha, hc, B, m, k](Tape& t, std::size_t self) {
      const auto& g = t.nodes_[self].grad;
      const auto& H = t.nodes_[hc.id].value;
      const auto& A = t.nodes_[alpha.id].value;
      auto& gH = t.nodes_[hc.id].grad;
      auto& gA = t.nodes_[alpha.id].grad;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0;
          for (std::size_t j = 0; j < k; ++j) {
            acc += g[b * k + j] * H[(b * m + i) * k + j];
            gH[(b * m + i) * k + j] += g[b * k + j] * A[b * m + i];
          }
          gA[b * m + i] += acc;
        }
    });
  }

  // Seeds d(out)/d(out) = 1 for a 1 x 1 output and sweeps in reverse.
  void backward(Var out) {
    require(nodes_[out.id].value.size() == 1, ErrorKind::shape, "backward: output must be a scalar");
    for (auto& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    nodes_[out.id].grad[0] = 1.0;
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
      if (n.param && n.param->grad.size() != n.grad.size()) n.param->grad.assign(n.grad.size(), 0.0);
      if (n.param)
        for (std::size_t e = 0; e < n.grad.size(); ++e) n.param->grad[e] += n.grad[e];
    }
  }

 private:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    std::size_t rows = 0, cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    Tensor* param = nullptr;
    Backward backward;
  };

  Var push(std::size_t rows, std::size_t cols, std::vector<double> value, Backward backward) {
    nodes_.push_back(Node{rows, cols, std::move(value), {}, nullptr, std::move(backward)});
    return Var{nodes_.size() - 1};
  }

  ConstMatrixMap cmap(Var v) const {
    const auto& n = nodes_[v.id];
    return ConstMatrixMap(n.value.data(), static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols));
  }
  MatrixMap gmap(Var v) {
    auto& n = nodes_[v.id];
    return MatrixMap(n.grad.data(), static_cast<Eigen::Index>(n.rows), static_cast<Eigen::Index>(n.cols));
  }
  std::string dims(Var v) const { return std::to_string(rows(v)) + "x" + std::to_string(cols(v)); }

  std::vector<Node> nodes_;
};

}  // namespace bwp::nn
