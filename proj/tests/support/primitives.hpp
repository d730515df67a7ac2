// SPDX-License-Identifier: Apache-2.0
// Random finite-difference cases for every differentiable primitive.
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctta/ops.hpp"
#include "generators.hpp"

namespace ctta::testkit {

struct PrimitiveCase {
  std::string name;
  /// Fresh random inputs (the last one may be a fixed projection weight).
  std::function<std::vector<ad::Tensor>(RngState&)> inputs;
  std::function<ad::Tensor(std::span<const ad::Tensor>)> f;
};

/// Scalar probe: sum(y * w) with a fixed random weight so no gradient entry is trivially uniform.
inline ad::Tensor project(const ad::Tensor& y, const ad::Tensor& w) { return ad::sum(ad::mul(y, w)); }

inline std::vector<PrimitiveCase> primitive_cases() {
  using ad::Tensor;
  auto mat = [](RngState& r, std::size_t lo = 1, std::size_t hi = 4) {
    return ad::Shape{between(r, lo, hi), between(r, lo, hi)};
  };
  std::vector<PrimitiveCase> c;

  c.push_back({"matmul",
               [=](RngState& r) {
                 const std::size_t m = between(r, 1, 4), k = between(r, 1, 4), n = between(r, 1, 4);
                 return std::vector<Tensor>{random_tensor(r, {m, k}), random_tensor(r, {k, n}), random_tensor(r, {m, n})};
               },
               [](std::span<const Tensor> x) { return project(ad::matmul(x[0], x[1]), x[2]); }});
  auto binary = [&](std::string name, Tensor (*op)(const Tensor&, const Tensor&)) {
    c.push_back({name,
                 [=](RngState& r) {
                   const auto s = mat(r);
                   return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s), random_tensor(r, s)};
                 },
                 [op](std::span<const Tensor> x) { return project(op(x[0], x[1]), x[2]); }});
  };
  binary("add", ad::add);
  binary("sub", ad::sub);
  binary("mul", ad::mul);
  c.push_back({"scale", [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return project(ad::scale(x[0], -1.7), x[1]); }});
  c.push_back({"add_scalar", [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return project(ad::mul(ad::add_scalar(x[0], 0.3), x[0]), x[1]); }});
  c.push_back({"add_rowwise",
               [=](RngState& r) {
                 const auto s = mat(r);
                 return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {s[1]}), random_tensor(r, s)};
               },
               [](std::span<const Tensor> x) { return project(ad::add_rowwise(x[0], x[1]), x[2]); }});
  c.push_back({"mul_rows",
               [=](RngState& r) {
                 const auto s = mat(r);
                 return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {s[0]}), random_tensor(r, s)};
               },
               [](std::span<const Tensor> x) { return project(ad::mul_rows(x[0], x[1]), x[2]); }});
  auto unary = [&](std::string name, Tensor (*op)(const Tensor&), double lo, double hi, bool away_from_zero) {
    c.push_back({name,
                 [=](RngState& r) {
                   const auto s = mat(r);
                   Tensor in = away_from_zero ? random_away_from_zero(r, s) : random_tensor(r, s, lo, hi);
                   return std::vector<Tensor>{in, random_tensor(r, s)};
                 },
                 [op](std::span<const Tensor> x) { return project(op(x[0]), x[1]); }});
  };
  unary("softplus", ad::softplus, -6.0, 6.0, false);
  unary("gelu", ad::gelu, -4.0, 4.0, false);
  unary("relu", ad::relu, 0.0, 0.0, true);
  unary("exp", ad::exp, -2.0, 2.0, false);
  unary("log", ad::log, 0.1, 3.0, false);
  unary("xlogx", ad::xlogx, 0.05, 2.0, false);
  c.push_back({"softmax_rows",
               [=](RngState& r) { const auto s = mat(r, 1, 5); return std::vector<Tensor>{random_tensor(r, s, -3, 3), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return project(ad::softmax_rows(x[0]), x[1]); }});
  c.push_back({"softmax_rows_masked",
               [=](RngState& r) {
                 const auto s = ad::Shape{between(r, 1, 4), between(r, 2, 5)};
                 return std::vector<Tensor>{random_tensor(r, s, -3, 3), random_tensor(r, s)};
               },
               [](std::span<const Tensor> x) {
                 std::vector<std::uint8_t> mask(x[0].numel(), 1);
                 for (std::size_t i = 0; i < x[0].rows(); ++i) mask[i * x[0].cols() + (i % x[0].cols())] = 0;
                 return project(ad::softmax_rows(x[0], mask), x[1]);
               }});
  c.push_back({"softmax",
               [=](RngState& r) { const std::size_t n = between(r, 1, 6); return std::vector<Tensor>{random_tensor(r, {n}, -3, 3), random_tensor(r, {n})}; },
               [](std::span<const Tensor> x) { return project(ad::softmax(x[0]), x[1]); }});
  c.push_back({"log_softmax_rows",
               [=](RngState& r) { const auto s = mat(r, 1, 5); return std::vector<Tensor>{random_tensor(r, s, -3, 3), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return project(ad::log_softmax_rows(x[0]), x[1]); }});
  // Entropy is defined on the simplex; probe it through a softmax so perturbations stay on it.
  c.push_back({"entropy",
               [=](RngState& r) { return std::vector<Tensor>{random_tensor(r, {between(r, 2, 6)}, -3, 3)}; },
               [](std::span<const Tensor> x) { return ad::entropy(ad::softmax(x[0])); }});
  c.push_back({"entropy_rows",
               [=](RngState& r) {
                 const auto s = ad::Shape{between(r, 1, 4), between(r, 2, 5)};
                 return std::vector<Tensor>{random_tensor(r, s, -3, 3), random_tensor(r, {s[0]})};
               },
               [](std::span<const Tensor> x) { return project(ad::entropy_rows(ad::softmax_rows(x[0])), x[1]); }});
  c.push_back({"sum", [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return ad::sum(ad::mul(ad::mul(x[0], x[0]), x[1])); }});
  c.push_back({"mean", [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, s)}; },
               [](std::span<const Tensor> x) { return ad::mean(ad::mul(ad::mul(x[0], x[0]), x[1])); }});
  for (int axis : {0, 1}) {
    c.push_back({"sum_axis" + std::to_string(axis),
                 [=](RngState& r) {
                   const auto s = mat(r);
                   return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {axis == 0 ? s[1] : s[0]})};
                 },
                 [axis](std::span<const Tensor> x) { return project(ad::sum_axis(x[0], axis), x[1]); }});
  }
  c.push_back({"gather_rows",
               [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {5, s[1]})}; },
               [](std::span<const Tensor> x) {
                 const std::size_t n = x[0].rows();
                 const std::size_t idx[5] = {n - 1, 0, (n - 1) / 2, n - 1, 0};
                 return project(ad::gather_rows(x[0], idx), x[1]);
               }});
  c.push_back({"pick",
               [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {s[0]})}; },
               [](std::span<const Tensor> x) {
                 std::vector<std::size_t> idx(x[0].rows());
                 for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = (3 * i + 1) % x[0].cols();
                 return project(ad::pick(x[0], idx), x[1]);
               }});
  c.push_back({"column",
               [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {s[0]})}; },
               [](std::span<const Tensor> x) { return project(ad::column(x[0], x[0].cols() - 1), x[1]); }});
  c.push_back({"concat0",
               [=](RngState& r) {
                 const std::size_t cols = between(r, 1, 4), a = between(r, 1, 3), b = between(r, 1, 3);
                 return std::vector<Tensor>{random_tensor(r, {a, cols}), random_tensor(r, {b, cols}), random_tensor(r, {a + b, cols})};
               },
               [](std::span<const Tensor> x) {
                 const Tensor parts[2] = {x[0], x[1]};
                 return project(ad::concat(parts, 0), x[2]);
               }});
  c.push_back({"concat1",
               [=](RngState& r) {
                 const std::size_t rows = between(r, 1, 4), a = between(r, 1, 3), b = between(r, 1, 3);
                 return std::vector<Tensor>{random_tensor(r, {rows, a}), random_tensor(r, {rows, b}), random_tensor(r, {rows, a + b})};
               },
               [](std::span<const Tensor> x) {
                 const Tensor parts[2] = {x[0], x[1]};
                 return project(ad::concat(parts, 1), x[2]);
               }});
  c.push_back({"reshape",
               [=](RngState& r) { const auto s = mat(r); return std::vector<Tensor>{random_tensor(r, s), random_tensor(r, {s[0] * s[1]})}; },
               [](std::span<const Tensor> x) { return project(ad::reshape(x[0], {x[0].numel()}), x[1]); }});
  c.push_back({"cross_entropy",
               [=](RngState& r) { return std::vector<Tensor>{random_tensor(r, {between(r, 1, 4), between(r, 2, 5)}, -3, 3)}; },
               [](std::span<const Tensor> x) {
                 std::vector<std::size_t> labels(x[0].rows());
                 for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7 + 1) % x[0].cols();
                 return ad::cross_entropy(x[0], labels);
               }});
  return c;
}

}  // namespace ctta::testkit
