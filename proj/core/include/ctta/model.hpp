// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctta/discriminator.hpp"
#include "ctta/mode_layer.hpp"
#include "ctta/rng.hpp"
#include "ctta/scenario.hpp"
#include "ctta/synergy.hpp"
#include "ctta/tensor.hpp"

namespace ctta {

struct ModelConfig {
  std::size_t input_dim = 32;
  /// Backbone stages: every block of stage s maps to width stage_dims[s].
  std::vector<std::size_t> stage_dims{32};
  std::vector<std::size_t> stage_blocks{3};
  /// MoDE rank per stage; 0 leaves the stage without MoDE layers.
  std::vector<std::size_t> stage_ranks{4};
  std::size_t classes = 4;
  std::size_t num_experts = 4;
  std::size_t num_domains = 4;
  std::size_t top_k = 2;
  RoutingPolicy policy = RoutingPolicy::topk;
  Activation activation = Activation::gelu;
  GateScope scope = GateScope::retained;
  std::size_t dd_hidden = 0;  // 0 selects default_dd_hidden(num_domains)
  double ema_beta = 0.9;

  void validate() const;
  std::size_t total_blocks() const;
  std::size_t output_width() const { return stage_dims.back(); }
};

/// Affine map followed by the activation: act(x W + b).
struct BackboneBlock {
  ad::Tensor weight;
  ad::Tensor bias;
};

struct LinearHead {
  ad::Tensor weight;
  ad::Tensor bias;
};

/// Frozen backbone blocks, each followed by an optional MoDE layer, a frozen
/// linear head, the domain discriminator and the assignment statistics.
class ModelAssembly {
 public:
  struct Forward {
    ad::Tensor logits;
    std::vector<GateRecord> records;
  };

  ModelAssembly(ModelConfig config, RngState& init_rng);

  /// `domains` has one router id per row (or a single id for all rows).
  Forward forward(const ad::Tensor& x, std::span<const std::size_t> domains, RngState& rng, bool noise_on) const;

  const ModelConfig& config() const { return config_; }
  const std::vector<BackboneBlock>& backbone() const { return backbone_; }
  const LinearHead& head() const { return head_; }
  const std::vector<std::optional<MoDELayer>>& mode_layers() const { return mode_layers_; }
  std::size_t mode_layer_count() const { return stats_.layers(); }
  DiscriminatorParams& dd() { return dd_; }
  const DiscriminatorParams& dd() const { return dd_; }
  DomainAssignmentStats& stats() { return stats_; }
  const DomainAssignmentStats& stats() const { return stats_; }

  /// MoDE layers take part in forward passes; off reproduces the source model.
  void set_mode_enabled(bool on) { mode_enabled_ = on; }
  bool mode_enabled() const { return mode_enabled_; }

  std::vector<ad::Tensor> mode_parameters(bool include_routers = true) const;
  std::vector<ad::Tensor> backbone_parameters() const;
  std::vector<ad::Tensor> head_parameters() const;
  /// Backbone, head and discriminator: everything the adaptation phase must not touch.
  std::vector<ad::Tensor> frozen_parameters() const;
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;

  void set_backbone_trainable(bool on);
  void set_head_trainable(bool on);

  std::uint64_t mode_param_count() const;
  /// SHA-256 of backbone, head and discriminator weights.
  std::string frozen_digest() const;

 private:
  ModelConfig config_;
  std::vector<BackboneBlock> backbone_;
  std::vector<std::optional<MoDELayer>> mode_layers_;
  LinearHead head_;
  DiscriminatorParams dd_;
  DomainAssignmentStats stats_;
  bool mode_enabled_ = true;
};

struct PretrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 3e-3;
};

/// Supervised training of backbone and head on clean source data (MoDE layers
/// bypassed). Both are frozen on return.
double pretrain_source(ModelAssembly& model, const LabeledData& source, const PretrainOptions& options, RngState& rng);

/// Fraction of rows whose argmax prediction equals the label, with noise off and
/// no graph recording. `domains` as in ModelAssembly::forward.
double accuracy(const ModelAssembly& model, const LabeledData& data, std::span<const std::size_t> domains,
                RngState& rng);

}  // namespace ctta
