// SPDX-License-Identifier: Apache-2.0
#include "ctta/mode_layer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"

namespace ctta {

using ad::Tensor;

Tensor activate(const Tensor& x, Activation act) {
  switch (act) {
    case Activation::gelu:
      return ad::gelu(x);
    case Activation::relu:
      return ad::relu(x);
    case Activation::identity:
      return x;
  }
  return x;
}

LowRankExpert LowRankExpert::zeros(std::size_t dim, std::size_t rank) {
  return {Tensor::zeros({dim, rank}, true), Tensor::zeros({rank}, true), Tensor::zeros({rank, dim}, true),
          Tensor::zeros({dim}, true)};
}

Tensor expert_forward(const LowRankExpert& e, const Tensor& x, Activation act) {
  if (x.rank() != 2 || x.cols() != e.dim()) {
    throw DimensionError("expert_forward: input width " + std::to_string(x.cols()) + " vs expert dim " +
                         std::to_string(e.dim()));
  }
  Tensor hidden = activate(ad::add_rowwise(ad::matmul(x, e.w_down), e.b_down), act);
  return ad::add_rowwise(ad::matmul(hidden, e.w_up), e.b_up);
}

DomainRouter DomainRouter::zeros(std::size_t dim, std::size_t num_experts) {
  return {Tensor::zeros({dim, num_experts}, true), Tensor::zeros({dim, num_experts}, true)};
}

Tensor noisy_gate_logits(const DomainRouter& router, const Tensor& x, RngState& rng, bool noise_on) {
  Tensor clean = ad::matmul(x, router.w_gate);
  if (!noise_on) return clean;
  std::vector<double> eps(clean.numel());
  for (auto& e : eps) e = rng.normal();
  Tensor noise(clean.shape(), std::move(eps));
  return ad::add(clean, ad::mul(noise, ad::softplus(ad::matmul(x, router.w_noise))));
}

std::vector<std::uint8_t> topk_mask(const Tensor& logits, std::size_t k) {
  const std::size_t r = logits.rows(), n = logits.cols();
  if (k < 1 || k > n) throw ContractError("top-k: K=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  std::vector<std::uint8_t> mask(r * n, 0);
  std::vector<std::size_t> idx(n);
  const auto v = logits.values();
  for (double e : v)
    if (!std::isfinite(e)) throw NumericError("top-k: non-finite gate logit");
  for (std::size_t i = 0; i < r; ++i) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[i * n + a] > v[i * n + b]; });
    for (std::size_t j = 0; j < k; ++j) mask[i * n + idx[j]] = 1;
  }
  return mask;
}

Tensor topk_softmax(const Tensor& logits, std::size_t k, GateScope scope) {
  auto mask = topk_mask(logits, k);
  if (scope == GateScope::retained) return ad::softmax_rows(logits, mask);
  std::vector<double> keep(mask.begin(), mask.end());
  return ad::mul(ad::softmax_rows(logits), Tensor(logits.shape(), std::move(keep)));
}

std::vector<std::size_t> GateRecord::selected() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < gate.size(); ++i)
    if (gate[i] > 0.0) out.push_back(i);
  return out;
}

void MoDELayerConfig::validate() const {
  if (dim == 0) throw ContractError("MoDE layer: dim must be positive");
  if (rank < 1 || rank > dim) throw ContractError("MoDE layer: rank must lie in [1, dim]");
  if (num_experts < 1) throw ContractError("MoDE layer: at least one expert required");
  if (num_domains < 1) throw ContractError("MoDE layer: at least one domain router required");
  if (top_k < 1 || top_k > num_experts) throw ContractError("MoDE layer: top_k must lie in [1, N]");
  if (!fixed_assignment.empty()) {
    if (fixed_assignment.size() != num_domains) throw ContractError("MoDE layer: fixed assignment needs D subsets");
    for (const auto& s : fixed_assignment) {
      if (s.empty()) throw ContractError("MoDE layer: empty fixed expert subset");
      for (auto e : s)
        if (e >= num_experts) throw ContractError("MoDE layer: fixed subset names a missing expert");
    }
  }
}

MoDELayer::MoDELayer(MoDELayerConfig config, std::size_t layer_id, RngState& init_rng)
    : config_(std::move(config)), layer_id_(layer_id) {
  config_.validate();
  const std::size_t dim = config_.dim, r = config_.rank, n = config_.num_experts;
  const double down_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    auto e = LowRankExpert::zeros(dim, r);
    for (auto& w : e.w_down.mutable_values()) w = down_scale * init_rng.normal();
    experts_.push_back(std::move(e));
  }
  for (std::size_t d = 0; d < config_.num_domains; ++d) {
    auto g = DomainRouter::zeros(dim, n);
    for (auto& w : g.w_gate.mutable_values()) w = down_scale * init_rng.normal();
    routers_.push_back(std::move(g));
  }
  build_subsets();
}

MoDELayer::MoDELayer(MoDELayerConfig config, std::size_t layer_id, std::vector<LowRankExpert> experts,
                     std::vector<DomainRouter> routers)
    : config_(std::move(config)), layer_id_(layer_id), experts_(std::move(experts)), routers_(std::move(routers)) {
  config_.validate();
  if (experts_.size() != config_.num_experts || routers_.size() != config_.num_domains) {
    throw ContractError("MoDE layer: expert/router counts disagree with the config");
  }
  for (const auto& e : experts_)
    if (e.dim() != config_.dim || e.rank() != config_.rank) throw DimensionError("MoDE layer: expert shape mismatch");
  for (const auto& g : routers_)
    if (g.w_gate.rows() != config_.dim || g.w_gate.cols() != config_.num_experts ||
        g.w_noise.shape() != g.w_gate.shape())
      throw DimensionError("MoDE layer: router shape mismatch");
  build_subsets();
}

void MoDELayer::build_subsets() {
  subsets_ = config_.fixed_assignment;
  if (!subsets_.empty()) return;
  const std::size_t n = config_.num_experts, d_count = config_.num_domains;
  subsets_.resize(d_count);
  for (std::size_t i = 0; i < n; ++i) subsets_[i % d_count].push_back(i);
  for (std::size_t d = 0; d < d_count; ++d)
    if (subsets_[d].empty()) subsets_[d].push_back(d % n);
}

Tensor MoDELayer::route(const Tensor& x, std::size_t domain, RngState& rng, bool noise_on) const {
  const std::size_t b = x.rows(), n = config_.num_experts;
  switch (config_.policy) {
    case RoutingPolicy::topk:
      return topk_softmax(noisy_gate_logits(routers_[domain], x, rng, noise_on), config_.top_k, config_.scope);
    case RoutingPolicy::stochastic: {
      std::vector<double> g(b * n, 0.0);
      for (std::size_t i = 0; i < b; ++i) g[i * n + rng.uniform_index(n)] = 1.0;
      return Tensor({b, n}, std::move(g));
    }
    case RoutingPolicy::fixed_multitask: {
      std::vector<double> g(b * n, 0.0);
      const auto& subset = subsets_[domain];
      for (std::size_t i = 0; i < b; ++i)
        for (auto e : subset) g[i * n + e] = 1.0 / static_cast<double>(subset.size());
      return Tensor({b, n}, std::move(g));
    }
  }
  throw RoutingError("unknown routing policy");
}

ModeOutput MoDELayer::forward(const Tensor& x, std::size_t domain, RngState& rng, bool noise_on) const {
  const std::size_t d[1] = {domain};
  return forward(x, std::span<const std::size_t>(d), rng, noise_on);
}

ModeOutput MoDELayer::forward(const Tensor& x, std::span<const std::size_t> domains, RngState& rng,
                              bool noise_on) const {
  if (x.rank() != 2 || x.cols() != config_.dim) {
    throw DimensionError("MoDE layer: input width " + std::to_string(x.cols()) + " vs dim " + std::to_string(config_.dim));
  }
  const std::size_t b = x.rows(), n = config_.num_experts;
  if (domains.size() != b && domains.size() != 1) throw ContractError("MoDE layer: need one domain id per row");
  auto domain_of = [&](std::size_t row) { return domains.size() == 1 ? domains[0] : domains[row]; };

  // Rows grouped by domain; std::map keeps the group order deterministic.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t d = config_.policy == RoutingPolicy::stochastic ? 0 : domain_of(i);
    if (d >= config_.num_domains) {
      throw RoutingError("MoDE layer " + std::to_string(layer_id_) + ": domain " + std::to_string(d) +
                         " has no router (D=" + std::to_string(config_.num_domains) + ")");
    }
    groups[d].push_back(i);
  }

  ModeOutput result;
  result.records.resize(b);
  std::vector<Tensor> parts;
  std::vector<std::size_t> order;
  for (const auto& [d, rows] : groups) {
    const bool whole = rows.size() == b;
    Tensor xg = whole ? x : ad::gather_rows(x, rows);
    Tensor gates = route(xg, d, rng, noise_on);
    const auto gv = gates.values();

    Tensor mix;
    bool any = false;
    for (std::size_t e = 0; e < n; ++e) {
      bool used = false;
      for (std::size_t r = 0; r < rows.size() && !used; ++r) used = gv[r * n + e] != 0.0;
      if (!used) continue;
      Tensor term = ad::mul_rows(expert_forward(experts_[e], xg, config_.activation), ad::column(gates, e));
      mix = any ? ad::add(mix, term) : term;
      any = true;
    }
    if (!any) mix = Tensor::zeros({rows.size(), config_.dim});

    for (std::size_t r = 0; r < rows.size(); ++r) {
      GateRecord rec;
      rec.layer = layer_id_;
      rec.domain = domain_of(rows[r]);
      rec.gate.assign(gv.begin() + static_cast<std::ptrdiff_t>(r * n), gv.begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
      const double s = std::accumulate(rec.gate.begin(), rec.gate.end(), 0.0);
      if (s > 0.0 && s != 1.0)
        for (auto& g : rec.gate) g /= s;
      rec.gates = gates;
      rec.row = r;
      result.records[rows[r]] = std::move(rec);
    }
    parts.push_back(mix);
    order.insert(order.end(), rows.begin(), rows.end());
  }

  Tensor mixed;
  if (parts.size() == 1) {
    mixed = parts.front();
  } else {
    std::vector<std::size_t> inverse(b);
    for (std::size_t k = 0; k < b; ++k) inverse[order[k]] = k;
    mixed = ad::gather_rows(ad::concat(parts, 0), inverse);
  }
  result.out = ad::add(x, mixed);
  return result;
}

std::vector<Tensor> MoDELayer::parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : experts_)
    for (auto& p : e.parameters()) out.push_back(p);
  for (const auto& g : routers_)
    for (auto& p : g.parameters()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, Tensor>> MoDELayer::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    const std::string p = prefix + "expert." + std::to_string(i) + ".";
    out.emplace_back(p + "w_down", experts_[i].w_down);
    out.emplace_back(p + "b_down", experts_[i].b_down);
    out.emplace_back(p + "w_up", experts_[i].w_up);
    out.emplace_back(p + "b_up", experts_[i].b_up);
  }
  for (std::size_t d = 0; d < routers_.size(); ++d) {
    const std::string p = prefix + "router." + std::to_string(d) + ".";
    out.emplace_back(p + "w_gate", routers_[d].w_gate);
    out.emplace_back(p + "w_noise", routers_[d].w_noise);
  }
  return out;
}

std::uint64_t MoDELayer::param_count() const {
  std::uint64_t total = 0;
  for (const auto& e : experts_) total += e.param_count();
  for (const auto& g : routers_) total += g.param_count();
  return total;
}

std::uint64_t mode_layer_param_count(std::uint64_t dim, std::uint64_t rank, std::uint64_t num_experts,
                                     std::uint64_t num_domains) {
  return num_experts * ((dim * rank + rank) + (rank * dim + dim)) + num_domains * 2 * dim * num_experts;
}

std::uint64_t param_count(std::span<const std::uint64_t> stage_dims, std::span<const std::uint64_t> stage_ranks,
                          std::span<const std::uint64_t> stage_blocks, std::uint64_t num_experts,
                          std::uint64_t num_domains) {
  if (stage_dims.size() != stage_ranks.size() || stage_dims.size() != stage_blocks.size()) {
    throw DimensionError("param_count: dims, ranks and blocks must have one entry per stage");
  }
  std::uint64_t total = 0;
  for (std::size_t s = 0; s < stage_dims.size(); ++s) {
    if (stage_ranks[s] == 0) continue;
    total += stage_blocks[s] * mode_layer_param_count(stage_dims[s], stage_ranks[s], num_experts, num_domains);
  }
  return total;
}

}  // namespace ctta
