// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctta/rng.hpp"
#include "ctta/tensor.hpp"

namespace ctta {

/// Two-layer MLP that labels an input with one of D pre-defined domains.
struct DiscriminatorParams {
  ad::Tensor w1;  // input_dim x hidden
  ad::Tensor b1;  // hidden
  ad::Tensor w2;  // hidden x D
  ad::Tensor b2;  // D
  bool frozen = false;

  static DiscriminatorParams init(std::size_t input_dim, std::size_t hidden, std::size_t num_domains, RngState& rng);

  std::size_t input_dim() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }
  std::size_t num_domains() const { return w2.cols(); }

  std::vector<ad::Tensor> parameters() const { return {w1, b1, w2, b2}; }
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
  /// Stops gradient tracking on every weight; predictions become available.
  void freeze();
};

/// Default hidden width: 2 * D * 4.
inline std::size_t default_dd_hidden(std::size_t num_domains) { return 2 * num_domains * 4; }

ad::Tensor dd_forward(const DiscriminatorParams& p, const ad::Tensor& x);
/// Mean cross-entropy against domain labels in [0, D).
ad::Tensor dd_loss(const ad::Tensor& logits, std::span<const std::size_t> labels);
/// Pseudo-domain per row (argmax, lowest index on ties). Requires a frozen discriminator.
std::vector<std::size_t> dd_predict(const DiscriminatorParams& p, const ad::Tensor& x);

}  // namespace ctta
