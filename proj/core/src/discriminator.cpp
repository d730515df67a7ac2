// SPDX-License-Identifier: Apache-2.0
#include "ctta/discriminator.hpp"

#include <cmath>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"

namespace ctta {

using ad::Tensor;

DiscriminatorParams DiscriminatorParams::init(std::size_t input_dim, std::size_t hidden, std::size_t num_domains,
                                              RngState& rng) {
  if (input_dim == 0 || hidden == 0 || num_domains == 0) throw ContractError("discriminator sizes must be positive");
  DiscriminatorParams p{Tensor::zeros({input_dim, hidden}, true), Tensor::zeros({hidden}, true),
                        Tensor::zeros({hidden, num_domains}, true), Tensor::zeros({num_domains}, true)};
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& w : p.w1.mutable_values()) w = s1 * rng.normal();
  for (auto& w : p.w2.mutable_values()) w = s2 * rng.normal();
  return p;
}

std::vector<std::pair<std::string, Tensor>> DiscriminatorParams::named_parameters(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

void DiscriminatorParams::freeze() {
  for (auto& t : {w1, b1, w2, b2}) {
    Tensor h = t;
    h.set_requires_grad(false);
  }
  frozen = true;
}

Tensor dd_forward(const DiscriminatorParams& p, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != p.input_dim()) {
    throw DimensionError("discriminator: input width " + std::to_string(x.cols()) + " vs " + std::to_string(p.input_dim()));
  }
  Tensor h = ad::gelu(ad::add_rowwise(ad::matmul(x, p.w1), p.b1));
  return ad::add_rowwise(ad::matmul(h, p.w2), p.b2);
}

Tensor dd_loss(const Tensor& logits, std::span<const std::size_t> labels) { return ad::cross_entropy(logits, labels); }

std::vector<std::size_t> dd_predict(const DiscriminatorParams& p, const Tensor& x) {
  if (!p.frozen) throw ContractError("dd_predict requires a frozen discriminator");
  ad::NoGradGuard no_grad;
  return ad::argmax_rows(dd_forward(p, x));
}

}  // namespace ctta
