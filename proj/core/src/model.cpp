// SPDX-License-Identifier: Apache-2.0
#include "ctta/model.hpp"

#include <cmath>
#include <numeric>

#include "ctta/errors.hpp"
#include "ctta/hashing.hpp"
#include "ctta/ops.hpp"
#include "ctta/optim.hpp"

namespace ctta {

using ad::Tensor;

void ModelConfig::validate() const {
  if (input_dim == 0) throw ContractError("model: input width must be positive");
  if (stage_dims.empty() || stage_dims.size() != stage_blocks.size() || stage_dims.size() != stage_ranks.size()) {
    throw ContractError("model: stage dims, blocks and ranks need one entry per stage");
  }
  for (std::size_t s = 0; s < stage_dims.size(); ++s) {
    if (stage_dims[s] == 0 || stage_blocks[s] == 0) throw ContractError("model: stage sizes must be positive");
    if (stage_ranks[s] > stage_dims[s]) throw ContractError("model: MoDE rank exceeds the stage width");
  }
  if (classes < 2) throw ContractError("model: at least two classes required");
  if (num_experts < 1 || num_domains < 1) throw ContractError("model: N and D must be positive");
  if (top_k < 1 || top_k > num_experts) throw ContractError("model: top_k must lie in [1, N]");
  if (!(ema_beta >= 0.0 && ema_beta < 1.0)) throw ContractError("model: ema_beta must lie in [0, 1)");
}

std::size_t ModelConfig::total_blocks() const {
  std::size_t n = 0;
  for (auto b : stage_blocks) n += b;
  return n;
}

ModelAssembly::ModelAssembly(ModelConfig config, RngState& init_rng) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  std::size_t in = c.input_dim;
  std::vector<std::size_t> block_stage;
  for (std::size_t s = 0; s < c.stage_dims.size(); ++s) {
    const std::size_t width = c.stage_dims[s];
    for (std::size_t b = 0; b < c.stage_blocks[s]; ++b) {
      BackboneBlock blk{Tensor::zeros({in, width}), Tensor::zeros({width})};
      const double sd = std::sqrt(2.0 / static_cast<double>(in + width));
      for (auto& w : blk.weight.mutable_values()) w = sd * init_rng.normal();
      backbone_.push_back(std::move(blk));
      block_stage.push_back(s);
      in = width;
    }
  }
  std::size_t layer_id = 0;
  for (std::size_t b = 0; b < backbone_.size(); ++b) {
    const std::size_t s = block_stage[b];
    if (c.stage_ranks[s] == 0) {
      mode_layers_.emplace_back(std::nullopt);
      continue;
    }
    MoDELayerConfig lc;
    lc.dim = c.stage_dims[s];
    lc.rank = c.stage_ranks[s];
    lc.num_experts = c.num_experts;
    lc.num_domains = c.num_domains;
    lc.top_k = c.top_k;
    lc.policy = c.policy;
    lc.activation = c.activation;
    lc.scope = c.scope;
    mode_layers_.emplace_back(MoDELayer(lc, layer_id++, init_rng));
  }
  const std::size_t width = c.output_width();
  head_ = {Tensor::zeros({width, c.classes}), Tensor::zeros({c.classes})};
  const double hs = std::sqrt(2.0 / static_cast<double>(width + c.classes));
  for (auto& w : head_.weight.mutable_values()) w = hs * init_rng.normal();
  const std::size_t hidden = c.dd_hidden ? c.dd_hidden : default_dd_hidden(c.num_domains);
  dd_ = DiscriminatorParams::init(c.input_dim, hidden, c.num_domains, init_rng);
  stats_ = DomainAssignmentStats(layer_id, c.num_domains, c.num_experts, c.ema_beta);
}

ModelAssembly::Forward ModelAssembly::forward(const Tensor& x, std::span<const std::size_t> domains, RngState& rng,
                                              bool noise_on) const {
  if (x.rank() != 2 || x.cols() != config_.input_dim) throw DimensionError("model: input width mismatch");
  Forward out;
  Tensor h = x;
  for (std::size_t b = 0; b < backbone_.size(); ++b) {
    h = activate(ad::add_rowwise(ad::matmul(h, backbone_[b].weight), backbone_[b].bias), config_.activation);
    if (mode_enabled_ && mode_layers_[b]) {
      auto m = mode_layers_[b]->forward(h, domains, rng, noise_on);
      h = m.out;
      for (auto& r : m.records) out.records.push_back(std::move(r));
    }
  }
  out.logits = ad::add_rowwise(ad::matmul(h, head_.weight), head_.bias);
  return out;
}

std::vector<Tensor> ModelAssembly::mode_parameters(bool include_routers) const {
  std::vector<Tensor> out;
  for (const auto& layer : mode_layers_) {
    if (!layer) continue;
    for (std::size_t e = 0; e < layer->experts().size(); ++e)
      for (auto& p : layer->expert_parameters(e)) out.push_back(p);
    if (!include_routers) continue;
    for (std::size_t d = 0; d < layer->routers().size(); ++d)
      for (auto& p : layer->router_parameters(d)) out.push_back(p);
  }
  return out;
}

std::vector<Tensor> ModelAssembly::backbone_parameters() const {
  std::vector<Tensor> out;
  for (const auto& b : backbone_) {
    out.push_back(b.weight);
    out.push_back(b.bias);
  }
  return out;
}

std::vector<Tensor> ModelAssembly::head_parameters() const { return {head_.weight, head_.bias}; }

std::vector<Tensor> ModelAssembly::frozen_parameters() const {
  auto out = backbone_parameters();
  for (auto& t : head_parameters()) out.push_back(t);
  for (auto& t : dd_.parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelAssembly::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < backbone_.size(); ++b) {
    out.emplace_back("backbone." + std::to_string(b) + ".weight", backbone_[b].weight);
    out.emplace_back("backbone." + std::to_string(b) + ".bias", backbone_[b].bias);
  }
  for (std::size_t b = 0; b < mode_layers_.size(); ++b) {
    if (!mode_layers_[b]) continue;
    for (auto& p : mode_layers_[b]->named_parameters("mode." + std::to_string(b) + ".")) out.push_back(std::move(p));
  }
  out.emplace_back("head.weight", head_.weight);
  out.emplace_back("head.bias", head_.bias);
  for (auto& p : dd_.named_parameters("dd.")) out.push_back(std::move(p));
  return out;
}

void ModelAssembly::set_backbone_trainable(bool on) {
  for (auto& t : backbone_parameters()) t.set_requires_grad(on);
}

void ModelAssembly::set_head_trainable(bool on) {
  for (auto& t : head_parameters()) t.set_requires_grad(on);
}

std::uint64_t ModelAssembly::mode_param_count() const {
  std::uint64_t n = 0;
  for (const auto& layer : mode_layers_)
    if (layer) n += layer->param_count();
  return n;
}

std::string ModelAssembly::frozen_digest() const {
  const auto params = frozen_parameters();
  return sha256_tensors(params);
}

double pretrain_source(ModelAssembly& model, const LabeledData& source, const PretrainOptions& options,
                       RngState& rng) {
  if (source.size() == 0) throw ContractError("pretrain: empty source dataset");
  const bool was_enabled = model.mode_enabled();
  model.set_mode_enabled(false);
  model.set_backbone_trainable(true);
  model.set_head_trainable(true);
  std::vector<Tensor> params = model.backbone_parameters();
  for (auto& t : model.head_parameters()) params.push_back(t);
  ad::Adam opt(params, {.lr = options.lr});

  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t zero[1] = {0};
  double last = 0.0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, n);
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(source.labels[i]);
      auto fwd = model.forward(source.rows(idx), zero, rng, false);
      Tensor loss = ad::cross_entropy(fwd.logits, labels);
      if (!std::isfinite(loss.item())) throw NumericError("non-finite source pretraining loss");
      loss.backward();
      opt.step();
      opt.zero_grad();
      total += loss.item();
      ++batches;
    }
    last = total / static_cast<double>(batches);
  }
  model.set_backbone_trainable(false);
  model.set_head_trainable(false);
  model.set_mode_enabled(was_enabled);
  return last;
}

double accuracy(const ModelAssembly& model, const LabeledData& data, std::span<const std::size_t> domains,
                RngState& rng) {
  if (data.size() == 0) throw ContractError("accuracy of an empty dataset");
  ad::NoGradGuard no_grad;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  auto fwd = model.forward(data.rows(all), domains, rng, false);
  const auto pred = ad::argmax_rows(fwd.logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace ctta
