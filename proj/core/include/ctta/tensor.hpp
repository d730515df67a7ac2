// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace ctta::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);

/// Writes d(loss)/d(parent) contributions. `parent_grads[i]` is null when parent i
/// does not require a gradient. Implementations must accumulate with `+=`.
using BackwardFn =
    std::function<void(const std::vector<double>& grad_out, std::span<std::vector<double>* const> parent_grads)>;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::optional<std::vector<double>> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

/// Dense row-major array of doubles (rank 0, 1 or 2) that records the operations
/// applied to it. Copies share the underlying node; use clone()/detach() for a deep copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad = false);

  /// Builds an interior graph node. The result tracks gradients only if
  /// gradient recording is enabled and some parent requires a gradient.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents, BackwardFn backward);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }
  /// Matrix view: rank 2 is (shape[0], shape[1]); rank 1 is a single row; rank 0 is 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->values; }
  /// Mutable storage; only meaningful on leaves (optimizers, checkpoint loading).
  std::span<double> mutable_values() { return node_->values; }
  double item() const;
  double operator[](std::size_t i) const { return node_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool is_leaf() const { return node_->parents.empty(); }

  bool has_grad() const { return node_->grad.has_value(); }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  /// Drops the gradient; has_grad() is false afterwards.
  void zero_grad() { node_->grad.reset(); }

  /// Graph-free copy of the values (stop-gradient).
  Tensor detach() const;
  /// Deep-copied leaf that keeps the requires_grad flag.
  Tensor clone() const;
  void copy_values_from(const Tensor& other);

  /// Reverse-mode sweep from this scalar. Gradients accumulate across calls.
  void backward() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace ctta::ad
