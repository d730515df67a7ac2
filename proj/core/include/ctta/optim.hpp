// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ctta/tensor.hpp"

namespace ctta::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// true: AdamW (decay applied to the weights); false: Adam.
  bool decoupled_decay = false;
};

/// Adam / AdamW over a fixed parameter list.
///
/// Updates are lazy: a parameter whose gradient is absent at step() is left
/// untouched, moments and step count included. Together with zero_grad()
/// dropping gradients this keeps experts that did not take part in a forward
/// pass bit-identical.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step();
  void zero_grad();

  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
  };
  std::vector<Tensor> params_;
  std::vector<Slot> slots_;
  AdamOptions options_;
};

}  // namespace ctta::ad
