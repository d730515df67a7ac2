// SPDX-License-Identifier: Apache-2.0
#include "ctta/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ctta/errors.hpp"

namespace ctta::ad {
namespace {

using Grads = std::span<std::vector<double>* const>;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got rank " + std::to_string(t.rank()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw DimensionError(std::string(op) + ": operand shapes differ");
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto* xn = x.node().get();
  return Tensor::from_op(x.shape(), std::move(out), {x}, [xn, df](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    auto& gx = *pg[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->values[i]);
  });
}

double softplus_value(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(k) + " and " + std::to_string(b.shape()[0]));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](const std::vector<double>& g, Grads pg) {
    if (pg[0]) {
      auto& ga = *pg[0];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bn->values[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (pg[1]) {
      auto& gb = *pg[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = an->values[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](const std::vector<double>& g, Grads pg) {
    for (auto* p : pg)
      if (p)
        for (std::size_t i = 0; i < g.size(); ++i) (*p)[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](const std::vector<double>& g, Grads pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto* an = a.node().get();
  auto* bn = b.node().get();
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [an, bn](const std::vector<double>& g, Grads pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * bn->values[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] += g[i] * an->values[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

Tensor add_rowwise(const Tensor& a, const Tensor& row) {
  const std::size_t r = a.rows(), c = a.cols();
  if (row.numel() != c) throw DimensionError("add_rowwise: bias width " + std::to_string(row.numel()) + " vs " + std::to_string(c));
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = row.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return Tensor::from_op(a.shape(), std::move(out), {a, row}, [r, c](const std::vector<double>& g, Grads pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*pg[1])[j] += g[i * c + j];
  });
}

Tensor mul_rows(const Tensor& a, const Tensor& col) {
  const std::size_t r = a.rows(), c = a.cols();
  if (col.numel() != r) throw DimensionError("mul_rows: weight length " + std::to_string(col.numel()) + " vs rows " + std::to_string(r));
  const auto av = a.values();
  const auto wv = col.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] * wv[i];
  auto* an = a.node().get();
  auto* wn = col.node().get();
  return Tensor::from_op(a.shape(), std::move(out), {a, col}, [an, wn, r, c](const std::vector<double>& g, Grads pg) {
    if (pg[0])
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*pg[0])[i * c + j] += g[i * c + j] * wn->values[i];
    if (pg[1])
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * an->values[i * c + j];
        (*pg[1])[i] += s;
      }
  });
}

Tensor softplus(const Tensor& x) { return unary(x, softplus_value, sigmoid); }

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("log of a negative value");
  return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor xlogx(const Tensor& x) {
  for (double v : x.values())
    if (v < 0.0) throw DomainError("x ln x of a negative value");
  return unary(
      x, [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; },
      [](double v) { return v > 0.0 ? std::log(v) + 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
  const std::size_t r = x.rows(), c = x.cols();
  if (!mask.empty() && mask.size() != x.numel()) throw DimensionError("softmax: mask size differs from input");
  const auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (mask.empty() || mask[i * c + j]) mx = std::max(mx, xv[i * c + j]);
    if (mx == -std::numeric_limits<double>::infinity()) throw InvalidMaskError("softmax: every entry of a row is masked");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (mask.empty() || mask[i * c + j]) z += (out[i * c + j] = std::exp(xv[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [y, r, c](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += (*y)[i * c + j] * g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*pg[0])[i * c + j] += (*y)[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

Tensor softmax(const Tensor& x, std::span<const std::uint8_t> mask) { return softmax_rows(x, mask); }

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  auto probs = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(xv[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = xv[i * c + j] - lse;
      (*probs)[i * c + j] = std::exp(out[i * c + j]);
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [probs, r, c](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) (*pg[0])[i * c + j] += g[i * c + j] - (*probs)[i * c + j] * gs;
    }
  });
}

Tensor entropy_rows(const Tensor& p) {
  const std::size_t r = p.rows(), c = p.cols();
  const auto pv = p.values();
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (pv[i * c + j] < 0.0) throw DomainError("entropy: negative probability");
      s += pv[i * c + j];
    }
    if (std::abs(s - 1.0) > 1e-6) throw ContractError("entropy: row does not sum to 1");
  }
  return scale(sum_axis(reshape(xlogx(p), {r, c}), 1), -1.0);
}

Tensor entropy(const Tensor& p) {
  if (p.rank() == 2 && p.rows() != 1) throw DimensionError("entropy: expected a single probability vector");
  return sum(entropy_rows(p));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::from_op({}, {s}, {a}, [](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (auto& v : *pg[0]) v += g[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis) {
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.values();
  if (axis == 0) {
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
    return Tensor::from_op({c}, std::move(out), {a}, [r, c](const std::vector<double>& g, Grads pg) {
      if (!pg[0]) return;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*pg[0])[i * c + j] += g[j];
    });
  }
  if (axis == 1) {
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
    return Tensor::from_op({r}, std::move(out), {a}, [r, c](const std::vector<double>& g, Grads pg) {
      if (!pg[0]) return;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*pg[0])[i * c + j] += g[i];
    });
  }
  throw DimensionError("sum_axis: axis must be 0 or 1");
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out;
  out.reserve(idx.size() * c);
  const auto av = a.values();
  for (auto i : idx) {
    if (i >= r) throw DimensionError("gather_rows: row " + std::to_string(i) + " out of range");
    out.insert(out.end(), av.begin() + static_cast<std::ptrdiff_t>(i * c), av.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  }
  return Tensor::from_op({idx.size(), c}, std::move(out), {a}, [idx, c](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) (*pg[0])[idx[k] * c + j] += g[k * c + j];
  });
}

Tensor pick(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t r = a.rows(), c = a.cols();
  if (index.size() != r) throw DimensionError("pick: need one index per row");
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] >= c) throw DimensionError("pick: column " + std::to_string(idx[i]) + " out of range");
    out[i] = a.values()[i * c + idx[i]];
  }
  return Tensor::from_op({r}, std::move(out), {a}, [idx, c](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < idx.size(); ++i) (*pg[0])[i * c + idx[i]] += g[i];
  });
}

Tensor column(const Tensor& a, std::size_t j) {
  const std::size_t r = a.rows(), c = a.cols();
  if (j >= c) throw DimensionError("column: index out of range");
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) out[i] = a.values()[i * c + j];
  return Tensor::from_op({r}, std::move(out), {a}, [j, r, c](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < r; ++i) (*pg[0])[i * c + j] += g[i];
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of nothing");
  for (const auto& p : parts) require_rank2(p, "concat");
  std::vector<Tensor> parents(parts.begin(), parts.end());
  if (axis == 0) {
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    std::vector<std::size_t> sizes;
    std::vector<double> out;
    for (const auto& p : parts) {
      if (p.cols() != c) throw DimensionError("concat: column counts differ");
      r += p.rows();
      sizes.push_back(p.numel());
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return Tensor::from_op({r, c}, std::move(out), parents, [sizes](const std::vector<double>& g, Grads pg) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < pg.size(); ++k) {
        if (pg[k])
          for (std::size_t i = 0; i < sizes[k]; ++i) (*pg[k])[i] += g[off + i];
        off += sizes[k];
      }
    });
  }
  if (axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat: row counts differ");
    widths.push_back(p.cols());
    c += p.cols();
  }
  std::vector<double> out(r * c);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * c + col0 + j] = p.values()[i * w + j];
    col0 += w;
  }
  return Tensor::from_op({r, c}, std::move(out), parents, [widths, r, c](const std::vector<double>& g, Grads pg) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < pg.size(); ++k) {
      const std::size_t w = widths[k];
      if (pg[k])
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) (*pg[k])[i * w + j] += g[i * c + c0 + j];
      c0 += w;
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) throw DimensionError("reshape: element count changes");
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a}, [](const std::vector<double>& g, Grads pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
  });
}

std::vector<std::size_t> argmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::size_t> out(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (a.values()[i * c + j] > a.values()[i * c + best]) best = j;
    out[i] = best;
  }
  return out;
}

Tensor stop_gradient(const Tensor& a) { return a.detach(); }

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("cross_entropy: one label per row required");
  for (auto l : labels)
    if (l >= logits.cols()) throw ContractError("cross_entropy: label " + std::to_string(l) + " out of range");
  return scale(mean(pick(log_softmax_rows(logits), labels)), -1.0);
}

}  // namespace ctta::ad
