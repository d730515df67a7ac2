// SPDX-License-Identifier: Apache-2.0
#include "ctta/optim.hpp"

#include <cmath>

namespace ctta::ad {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].numel(), 0.0);
    slots_[i].v.assign(params_[i].numel(), 0.0);
  }
}

void Adam::step() {
  const auto& o = options_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto& s = slots_[i];
    ++s.t;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(s.t));
    auto w = p.mutable_values();
    const auto g = p.grad();
    for (std::size_t k = 0; k < w.size(); ++k) {
      double gk = g[k];
      if (o.weight_decay != 0.0) {
        if (o.decoupled_decay) {
          w[k] -= o.lr * o.weight_decay * w[k];
        } else {
          gk += o.weight_decay * w[k];
        }
      }
      s.m[k] = o.beta1 * s.m[k] + (1.0 - o.beta1) * gk;
      s.v[k] = o.beta2 * s.v[k] + (1.0 - o.beta2) * gk * gk;
      w[k] -= o.lr * (s.m[k] / bc1) / (std::sqrt(s.v[k] / bc2) + o.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace ctta::ad
