// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctta/rng.hpp"
#include "ctta/tensor.hpp"

namespace ctta {

enum class Activation { gelu, relu, identity };
enum class RoutingPolicy { topk, stochastic, fixed_multitask };
/// retained: softmax over the K kept logits. full: softmax over all N, then
/// the non-top-K entries are zeroed without renormalizing.
enum class GateScope { retained, full };

ad::Tensor activate(const ad::Tensor& x, Activation act);

/// Bottleneck adapter: act(x W_down + b_down) W_up + b_up.
struct LowRankExpert {
  ad::Tensor w_down;  // dim x r
  ad::Tensor b_down;  // r
  ad::Tensor w_up;    // r x dim
  ad::Tensor b_up;    // dim

  static LowRankExpert zeros(std::size_t dim, std::size_t rank);
  std::size_t dim() const { return w_down.rows(); }
  std::size_t rank() const { return w_down.cols(); }
  std::size_t param_count() const { return (dim() * rank() + rank()) + (rank() * dim() + dim()); }
  std::vector<ad::Tensor> parameters() const { return {w_down, b_down, w_up, b_up}; }
};

ad::Tensor expert_forward(const LowRankExpert& expert, const ad::Tensor& x, Activation act = Activation::gelu);

/// Per-domain noisy gate. No biases.
struct DomainRouter {
  ad::Tensor w_gate;   // dim x N
  ad::Tensor w_noise;  // dim x N

  static DomainRouter zeros(std::size_t dim, std::size_t num_experts);
  std::size_t param_count() const { return w_gate.numel() + w_noise.numel(); }
  std::vector<ad::Tensor> parameters() const { return {w_gate, w_noise}; }
};

/// x W_g + eps * softplus(x W_noise), eps ~ N(0,1) per (row, expert) when noise_on.
ad::Tensor noisy_gate_logits(const DomainRouter& router, const ad::Tensor& x, RngState& rng, bool noise_on);

/// Row-major keep-mask of the K largest logits per row; ties go to the lower index.
std::vector<std::uint8_t> topk_mask(const ad::Tensor& logits, std::size_t k);
ad::Tensor topk_softmax(const ad::Tensor& logits, std::size_t k, GateScope scope = GateScope::retained);

/// Assignment weights of one sample in one layer.
struct GateRecord {
  std::size_t layer = 0;
  std::size_t domain = 0;
  /// Normalized to unit sum.
  std::vector<double> gate;
  /// Differentiable gate block the sample belongs to, and its row there.
  ad::Tensor gates;
  std::size_t row = 0;

  std::vector<std::size_t> selected() const;
};

struct MoDELayerConfig {
  std::size_t dim = 32;
  std::size_t rank = 4;
  std::size_t num_experts = 4;
  std::size_t num_domains = 4;
  std::size_t top_k = 2;
  RoutingPolicy policy = RoutingPolicy::topk;
  Activation activation = Activation::gelu;
  GateScope scope = GateScope::retained;
  /// Expert subsets per domain for fixed_multitask; empty selects {i : i mod D == d}.
  std::vector<std::vector<std::size_t>> fixed_assignment;

  void validate() const;
};

struct ModeOutput {
  ad::Tensor out;
  std::vector<GateRecord> records;  // one per input row
};

/// N low-rank experts mixed by D domain routers, added onto the input
/// through a skip connection.
class MoDELayer {
 public:
  /// Random routers and down-projections; up-projections start at zero so the
  /// layer is the identity map.
  MoDELayer(MoDELayerConfig config, std::size_t layer_id, RngState& init_rng);
  MoDELayer(MoDELayerConfig config, std::size_t layer_id, std::vector<LowRankExpert> experts,
            std::vector<DomainRouter> routers);

  ModeOutput forward(const ad::Tensor& x, std::size_t domain, RngState& rng, bool noise_on) const;
  /// Per-row domain ids (size B, or size 1 to broadcast).
  ModeOutput forward(const ad::Tensor& x, std::span<const std::size_t> domains, RngState& rng, bool noise_on) const;

  const MoDELayerConfig& config() const { return config_; }
  std::size_t layer_id() const { return layer_id_; }
  const std::vector<LowRankExpert>& experts() const { return experts_; }
  const std::vector<DomainRouter>& routers() const { return routers_; }
  const std::vector<std::size_t>& fixed_subset(std::size_t domain) const { return subsets_.at(domain); }

  std::vector<ad::Tensor> parameters() const;
  std::vector<ad::Tensor> expert_parameters(std::size_t expert) const { return experts_.at(expert).parameters(); }
  std::vector<ad::Tensor> router_parameters(std::size_t domain) const { return routers_.at(domain).parameters(); }
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters(const std::string& prefix) const;
  std::uint64_t param_count() const;

 private:
  ad::Tensor route(const ad::Tensor& x, std::size_t domain, RngState& rng, bool noise_on) const;
  void build_subsets();

  MoDELayerConfig config_;
  std::size_t layer_id_;
  std::vector<LowRankExpert> experts_;
  std::vector<DomainRouter> routers_;
  std::vector<std::vector<std::size_t>> subsets_;
};

/// Parameters of one layer: N((dim r + r) + (r dim + dim)) + D 2 dim N.
std::uint64_t mode_layer_param_count(std::uint64_t dim, std::uint64_t rank, std::uint64_t num_experts,
                                     std::uint64_t num_domains);

/// Total over stages; a stage with rank 0 carries no layer.
std::uint64_t param_count(std::span<const std::uint64_t> stage_dims, std::span<const std::uint64_t> stage_ranks,
                          std::span<const std::uint64_t> stage_blocks, std::uint64_t num_experts,
                          std::uint64_t num_domains);

}  // namespace ctta
