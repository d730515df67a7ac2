// SPDX-License-Identifier: Apache-2.0
#include "ctta/tensor.hpp"

#include <string>
#include <unordered_map>
#include <unordered_set>

#include "ctta/errors.hpp"

namespace ctta::ad {
namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor() : Tensor(Shape{}, {0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (shape.size() > 2) throw DimensionError("tensors are limited to rank 2, got " + shape_str(shape));
  if (numel_of(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> vals;
  vals.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    vals.insert(vals.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(vals), requires_grad);
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape()[1];
  if (rank() == 1) return shape()[0];
  return 1;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->values[0];
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be changed on leaves");
  node_->requires_grad = flag;
  if (!flag) node_->grad.reset();
}

std::span<const double> Tensor::grad() const {
  if (!node_->grad) throw ContractError("tensor has no gradient");
  return *node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_->grad) node_->grad.emplace(numel(), 0.0);
  return *node_->grad;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->values, requires_grad()); }

void Tensor::copy_values_from(const Tensor& other) {
  if (other.shape() != shape()) {
    throw DimensionError("copy " + shape_str(other.shape()) + " into " + shape_str(shape()));
  }
  node_->values = other.node_->values;
}

void Tensor::backward() const {
  if (numel() != 1) throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<detail::Node*, std::vector<double>> pass;
  pass.reserve(order.size());
  pass[node_.get()] = {1.0};
  std::vector<std::vector<double>*> pgrads;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    auto found = pass.find(node);
    if (found == pass.end() || !node->backward) continue;
    pgrads.assign(node->parents.size(), nullptr);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      detail::Node* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      auto& buf = pass[p];
      if (buf.empty()) buf.assign(p->values.size(), 0.0);
      pgrads[i] = &buf;
    }
    // `found` may be invalidated by the inserts above.
    node->backward(pass.at(node), pgrads);
  }

  for (detail::Node* node : order) {
    auto found = pass.find(node);
    if (found == pass.end()) continue;
    if (!node->grad) {
      node->grad = std::move(found->second);
    } else {
      auto& g = *node->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += found->second[i];
    }
  }
}

}  // namespace ctta::ad
