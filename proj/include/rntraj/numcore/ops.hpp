#pragma once

// Differentiable primitives over nc::Tensor.
//
// Binary elementwise ops broadcast a dimension of size 1 against any size.
// Index-based ops (gather/scatter/segment_*) take plain index vectors; the
// indices are constants of the graph, never differentiated.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rntraj/numcore/tensor.hpp"

namespace rntraj::nc {

using Index = std::vector<std::size_t>;

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

inline Shape broadcast_shape(Shape a, Shape b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                         to_string(b));
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

// Elementwise binary op with broadcasting. `fwd(x, y)` gives the value,
// `dx(x, y, out)` and `dy(x, y, out)` the local partials.
template <class F, class DX, class DY>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F fwd, DX dx, DY dy) {
  const Shape sa = a.shape(), sb = b.shape();
  const Shape so = broadcast_shape(sa, sb, name);
  std::vector<double> out(so.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  const bool same = (sa == so && sb == so);
  if (same) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = fwd(av[k], bv[k]);
  } else {
    for (std::size_t i = 0; i < so.rows; ++i) {
      const std::size_t ai = sa.rows == 1 ? 0 : i, bi = sb.rows == 1 ? 0 : i;
      for (std::size_t j = 0; j < so.cols; ++j) {
        const std::size_t aj = sa.cols == 1 ? 0 : j, bj = sb.cols == 1 ? 0 : j;
        out[i * so.cols + j] = fwd(av[ai * sa.cols + aj], bv[bi * sb.cols + bj]);
      }
    }
  }
  return Tensor::make_result(so, std::move(out), {&a, &b}, [sa, sb, so, dx, dy](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const auto& g = self.grad;
    const auto& o = self.value;
    std::vector<double>* ga = pa.requires_grad ? &pa.ensure_grad() : nullptr;
    std::vector<double>* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
    for (std::size_t i = 0; i < so.rows; ++i) {
      const std::size_t ai = sa.rows == 1 ? 0 : i, bi = sb.rows == 1 ? 0 : i;
      for (std::size_t j = 0; j < so.cols; ++j) {
        const std::size_t aj = sa.cols == 1 ? 0 : j, bj = sb.cols == 1 ? 0 : j;
        const std::size_t ka = ai * sa.cols + aj, kb = bi * sb.cols + bj, k = i * so.cols + j;
        const double x = pa.value[ka], y = pb.value[kb];
        if (ga) (*ga)[ka] += g[k] * dx(x, y, o[k]);
        if (gb) (*gb)[kb] += g[k] * dy(x, y, o[k]);
      }
    }
  });
}

// Elementwise unary op; `d(x, out)` is the local derivative.
template <class F, class D>
Tensor unary(const Tensor& a, F fwd, D d) {
  std::vector<double> out(a.size());
  const auto& av = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = fwd(av[k]);
  return Tensor::make_result(a.shape(), std::move(out), {&a}, [d](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.ensure_grad();
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += self.grad[k] * d(p.value[k], self.value[k]);
  });
}

inline void check_index(const Index& idx, std::size_t bound, const char* op) {
  for (std::size_t i : idx) {
    if (i >= bound) {
      throw DimensionError(std::string(op) + ": index " + std::to_string(i) + " out of range " +
                           std::to_string(bound));
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  if (m && n && k) {
    detail::Map(out.data(), m, n).noalias() =
        detail::MapC(a.data().data(), m, k) * detail::MapC(b.data().data(), k, n);
  }
  return Tensor::make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    if (!m || !n || !k) return;
    detail::Node& pa = detail::parent(self, 0);
    detail::Node& pb = detail::parent(self, 1);
    detail::MapC g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      detail::Map(pa.ensure_grad().data(), m, k).noalias() +=
          g * detail::MapC(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      detail::Map(pb.ensure_grad().data(), k, n).noalias() +=
          detail::MapC(pa.value.data(), m, k).transpose() * g;
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  return Tensor::make_result({c, r}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.data()) {
    if (y == 0.0) throw DomainError("div: zero divisor");
  }
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

// 1 - a
inline Tensor one_minus(const Tensor& a) {
  return detail::unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline constexpr double kLeakySlope = 0.2;

inline Tensor leaky_relu(const Tensor& a, double slope = kLeakySlope) {
  return detail::unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw DomainError("log: non-positive argument");
  }
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw DomainError("sqrt: argument must be positive");
  }
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return Tensor::make_result({1, 1}, {s}, {&a}, [](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (double& x : g) x += self.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw DomainError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

// axis 0 sums over rows (-> 1 x cols), axis 1 over columns (-> rows x 1).
inline Tensor sum(const Tensor& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  if (axis == 0) {
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
    return Tensor::make_result({1, c}, std::move(out), {&a}, [r, c](detail::Node& self) {
      auto& g = detail::parent(self, 0).ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j];
    });
  }
  if (axis != 1) throw ContractError("sum: axis must be 0 or 1");
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += a.data()[i * c + j];
  return Tensor::make_result({r, 1}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i];
  });
}

inline Tensor mean(const Tensor& a, int axis) {
  const std::size_t n = axis == 0 ? a.rows() : a.cols();
  if (n == 0) throw DomainError("mean: empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Softmax family

// Softmax across each row.
inline Tensor softmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw DomainError("softmax over empty axis");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.data().data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= s;
  }
  return Tensor::make_result({r, c}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

inline Tensor log_softmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  if (c == 0) throw DomainError("log_softmax over empty axis");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j] - lse;
  }
  return Tensor::make_result({r, c}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        g[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs;
      }
    }
  });
}

// Row-wise log of  exp(a_ij) * w_ij / sum_k exp(a_ik) * w_ik  for constant
// non-negative weights w. Entries with w_ij == 0 have zero probability and
// are reported as -infinity; their gradient contribution is zero.
inline Tensor masked_log_softmax_rows(const Tensor& a, std::span<const double> weights) {
  const std::size_t r = a.rows(), c = a.cols();
  if (weights.size() != r * c) {
    throw DimensionError("masked_log_softmax_rows: weights size " + std::to_string(weights.size()) +
                         " vs " + to_string(a.shape()));
  }
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      const double w = weights[i * c + j];
      if (w < 0.0) throw DomainError("masked_log_softmax_rows: negative weight");
      if (w > 0.0) mx = std::max(mx, a.data()[i * c + j] + std::log(w));
    }
    if (!std::isfinite(mx)) throw ContractError("masked_log_softmax_rows: row has no support");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double w = weights[i * c + j];
      if (w > 0.0) s += std::exp(a.data()[i * c + j] + std::log(w) - mx);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      const double w = weights[i * c + j];
      out[i * c + j] = w > 0.0 ? a.data()[i * c + j] + std::log(w) - lse
                               : -std::numeric_limits<double>::infinity();
    }
  }
  return Tensor::make_result({r, c}, std::move(out), {&a}, [r, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (std::isfinite(self.value[i * c + j])) gs += self.grad[i * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) {
        const double lp = self.value[i * c + j];
        if (std::isfinite(lp)) g[i * c + j] += self.grad[i * c + j] - std::exp(lp) * gs;
      }
    }
  });
}

// Softmax down each column within groups of rows sharing a segment id.
inline Tensor segment_softmax(const Tensor& a, const Index& seg, std::size_t nseg) {
  const std::size_t r = a.rows(), c = a.cols();
  if (seg.size() != r) throw DimensionError("segment_softmax: segment ids do not match rows");
  detail::check_index(seg, nseg, "segment_softmax");
  std::vector<double> mx(nseg * c, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      mx[seg[i] * c + j] = std::max(mx[seg[i] * c + j], a.data()[i * c + j]);
  std::vector<double> out(r * c), den(nseg * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      den[seg[i] * c + j] += (out[i * c + j] = std::exp(a.data()[i * c + j] - mx[seg[i] * c + j]));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= den[seg[i] * c + j];
  return Tensor::make_result({r, c}, std::move(out), {&a}, [r, c, seg, nseg](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    std::vector<double> dot(nseg * c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        dot[seg[i] * c + j] += self.grad[i * c + j] * self.value[i * c + j];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - dot[seg[i] * c + j]);
  });
}

// Log-softmax down each column within row groups.
inline Tensor segment_log_softmax(const Tensor& a, const Index& seg, std::size_t nseg) {
  const std::size_t r = a.rows(), c = a.cols();
  if (seg.size() != r) throw DimensionError("segment_log_softmax: segment ids do not match rows");
  detail::check_index(seg, nseg, "segment_log_softmax");
  std::vector<double> mx(nseg * c, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      mx[seg[i] * c + j] = std::max(mx[seg[i] * c + j], a.data()[i * c + j]);
  std::vector<double> den(nseg * c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      den[seg[i] * c + j] += std::exp(a.data()[i * c + j] - mx[seg[i] * c + j]);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t s = seg[i] * c + j;
      out[i * c + j] = a.data()[i * c + j] - mx[s] - std::log(den[s]);
    }
  return Tensor::make_result({r, c}, std::move(out), {&a}, [r, c, seg, nseg](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    std::vector<double> gs(nseg * c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gs[seg[i] * c + j] += self.grad[i * c + j];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs[seg[i] * c + j];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

// axis 0 stacks rows, axis 1 stacks columns.
inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  std::size_t r = 0, c = 0;
  for (const Tensor& p : parts) {
    if (axis == 0) {
      if (p.cols() != parts[0].cols())
        throw DimensionError("concat rows: " + to_string(parts[0].shape()) + " vs " +
                             to_string(p.shape()));
      r += p.rows();
      c = p.cols();
    } else {
      if (p.rows() != parts[0].rows())
        throw DimensionError("concat cols: " + to_string(parts[0].shape()) + " vs " +
                             to_string(p.shape()));
      c += p.cols();
      r = p.rows();
    }
  }
  std::vector<double> out(r * c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const double v = p.data()[i * p.cols() + j];
        if (axis == 0) out[(off + i) * c + j] = v;
        else out[i * c + off + j] = v;
      }
    off += axis == 0 ? p.rows() : p.cols();
  }
  return Tensor::make_result({r, c}, std::move(out), parts, [axis, c, offsets](detail::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      detail::Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      const std::size_t pr = p.shape.rows, pc = p.shape.cols, o = offsets[k];
      for (std::size_t i = 0; i < pr; ++i)
        for (std::size_t j = 0; j < pc; ++j)
          g[i * pc + j] += axis == 0 ? self.grad[(o + i) * c + j] : self.grad[i * c + o + j];
    }
  });
}

// Contiguous block [begin, begin+count) along `axis`.
inline Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t count) {
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  if (begin + count > extent) {
    throw DimensionError("slice: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of " + to_string(a.shape()));
  }
  const std::size_t orows = axis == 0 ? count : r, ocols = axis == 0 ? c : count;
  std::vector<double> out(orows * ocols);
  for (std::size_t i = 0; i < orows; ++i)
    for (std::size_t j = 0; j < ocols; ++j)
      out[i * ocols + j] =
          axis == 0 ? a.data()[(begin + i) * c + j] : a.data()[i * c + begin + j];
  return Tensor::make_result(
      {orows, ocols}, std::move(out), {&a}, [axis, begin, c, orows, ocols](detail::Node& self) {
        auto& g = detail::parent(self, 0).ensure_grad();
        for (std::size_t i = 0; i < orows; ++i)
          for (std::size_t j = 0; j < ocols; ++j) {
            const std::size_t k = axis == 0 ? (begin + i) * c + j : i * c + begin + j;
            g[k] += self.grad[i * ocols + j];
          }
      });
}

// out[i] = a[idx[i]]
inline Tensor gather_rows(const Tensor& a, const Index& idx) {
  detail::check_index(idx, a.rows(), "gather_rows");
  const std::size_t c = a.cols();
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(a.data().begin() + idx[i] * c, c, out.begin() + i * c);
  return Tensor::make_result({idx.size(), c}, std::move(out), {&a}, [idx, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
  });
}

// out[idx[i]] += a[i], out has n rows.
inline Tensor scatter_add_rows(const Tensor& a, const Index& idx, std::size_t n) {
  if (idx.size() != a.rows()) throw DimensionError("scatter_add_rows: index length vs rows");
  detail::check_index(idx, n, "scatter_add_rows");
  const std::size_t c = a.cols();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) out[idx[i] * c + j] += a.data()[i * c + j];
  return Tensor::make_result({n, c}, std::move(out), {&a}, [idx, c](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[idx[i] * c + j];
  });
}

// Mean of the rows in each segment; every segment must be non-empty.
inline Tensor segment_mean_rows(const Tensor& a, const Index& seg, std::size_t nseg) {
  std::vector<double> inv(nseg, 0.0);
  for (std::size_t s : seg) {
    if (s >= nseg) throw DimensionError("segment_mean_rows: segment id out of range");
    inv[s] += 1.0;
  }
  for (double& v : inv) {
    if (v == 0.0) throw DomainError("segment_mean_rows: empty segment");
    v = 1.0 / v;
  }
  return mul(scatter_add_rows(a, seg, nseg), Tensor({nseg, 1}, std::move(inv)));
}

// Broadcast-repeat a 1 x c row into n rows.
inline Tensor repeat_rows(const Tensor& a, std::size_t n) {
  if (a.rows() != 1) throw DimensionError("repeat_rows: expects a single row, got " + to_string(a.shape()));
  return gather_rows(a, Index(n, 0));
}

// Replaces entries where mask is set with `value` (no gradient flows there).
inline Tensor masked_fill(const Tensor& a, const std::vector<bool>& mask, double value) {
  if (mask.size() != a.size()) throw DimensionError("masked_fill: mask size");
  std::vector<double> out = a.data();
  for (std::size_t k = 0; k < out.size(); ++k)
    if (mask[k]) out[k] = value;
  return Tensor::make_result(a.shape(), std::move(out), {&a}, [mask](detail::Node& self) {
    auto& g = detail::parent(self, 0).ensure_grad();
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!mask[k]) g[k] += self.grad[k];
  });
}

// Elements a[rows[i], cols[i]] as a column vector.
inline Tensor pick(const Tensor& a, const Index& rows, const Index& cols) {
  if (rows.size() != cols.size()) throw DimensionError("pick: rows/cols length mismatch");
  detail::check_index(rows, a.rows(), "pick");
  detail::check_index(cols, a.cols(), "pick");
  const std::size_t c = a.cols();
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = a.data()[rows[i] * c + cols[i]];
  return Tensor::make_result({rows.size(), 1}, std::move(out), {&a},
                             [rows, cols, c](detail::Node& self) {
                               auto& g = detail::parent(self, 0).ensure_grad();
                               for (std::size_t i = 0; i < rows.size(); ++i)
                                 g[rows[i] * c + cols[i]] += self.grad[i];
                             });
}

}  // namespace rntraj::nc
