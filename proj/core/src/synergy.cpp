// SPDX-License-Identifier: Apache-2.0
#include "ctta/synergy.hpp"

#include <cmath>
#include <map>
#include <string>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"

namespace ctta {

using ad::Tensor;

namespace {

void check_joint(const Matrix& joint) {
  double s = 0.0;
  for (double v : joint.data) {
    if (!(v >= 0.0)) throw DomainError("joint distribution has a negative or NaN cell");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw ContractError("joint distribution sums to " + std::to_string(s) + ", not 1");
}

}  // namespace

DomainAssignmentStats::DomainAssignmentStats(std::size_t layers, std::size_t num_domains, std::size_t num_experts,
                                             double ema_beta)
    : num_domains_(num_domains), num_experts_(num_experts), ema_beta_(ema_beta) {
  if (!(ema_beta >= 0.0 && ema_beta < 1.0)) throw ContractError("ema_beta must lie in [0, 1)");
  if (num_domains == 0 || num_experts == 0) throw ContractError("stats need D >= 1 and N >= 1");
  const double prior = 1.0 / static_cast<double>(num_experts);
  tables_.assign(layers, Matrix(num_domains, num_experts, prior));
  selections_.assign(layers, Matrix(num_domains, num_experts, 0.0));
  counts_.assign(layers, std::vector<std::uint64_t>(num_domains, 0));
}

void DomainAssignmentStats::update(const GateRecord& rec) {
  if (rec.layer >= tables_.size()) throw ContractError("gate record names layer " + std::to_string(rec.layer));
  if (rec.domain >= num_domains_) throw ContractError("gate record names domain " + std::to_string(rec.domain));
  if (rec.gate.size() != num_experts_) throw ContractError("gate record has the wrong number of experts");
  double s = 0.0;
  for (double g : rec.gate) {
    if (!(g >= 0.0)) throw ContractError("gate record has a negative weight");
    s += g;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ContractError("gate record does not sum to 1");

  auto row = tables_[rec.layer].row(rec.domain);
  auto sel = selections_[rec.layer].row(rec.domain);
  for (std::size_t i = 0; i < num_experts_; ++i) {
    row[i] = ema_beta_ * row[i] + (1.0 - ema_beta_) * rec.gate[i];
    if (rec.gate[i] > 0.0) sel[i] += 1.0;
  }
  ++counts_[rec.layer][rec.domain];
}

void update_stats(DomainAssignmentStats& stats, const GateRecord& record) { stats.update(record); }

Matrix joint_distribution(const DomainAssignmentStats& stats, std::size_t layer) {
  Matrix joint = stats.table(layer);
  const double pd = 1.0 / static_cast<double>(stats.num_domains());
  for (auto& v : joint.data) v *= pd;
  return joint;
}

double synergy_mi(const Matrix& joint) {
  check_joint(joint);
  std::vector<double> p_expert(joint.cols, 0.0), p_domain(joint.rows, 0.0);
  for (std::size_t d = 0; d < joint.rows; ++d)
    for (std::size_t i = 0; i < joint.cols; ++i) {
      p_expert[i] += joint(d, i);
      p_domain[d] += joint(d, i);
    }
  double mi = 0.0;
  for (std::size_t d = 0; d < joint.rows; ++d)
    for (std::size_t i = 0; i < joint.cols; ++i) {
      const double p = joint(d, i);
      if (p > 0.0) mi += p * std::log(p / (p_expert[i] * p_domain[d]));
    }
  return mi;
}

double synergy_negentropy(const Matrix& joint) {
  check_joint(joint);
  double s = 0.0;
  for (double p : joint.data)
    if (p > 0.0) s += p * std::log(p);
  return s;
}

Tensor synergy_of_joint(const Tensor& joint, SynergyVariant variant) {
  if (joint.rank() != 2) throw DimensionError("synergy: joint must be a D x N matrix");
  Tensor neg_h_joint = ad::sum(ad::xlogx(joint));
  if (variant == SynergyVariant::negative_entropy) return neg_h_joint;
  // I(D;A) = H(A) + H(D) - H(A, D)
  Tensor neg_h_expert = ad::sum(ad::xlogx(ad::sum_axis(joint, 0)));
  Tensor neg_h_domain = ad::sum(ad::xlogx(ad::sum_axis(joint, 1)));
  return ad::sub(ad::sub(neg_h_joint, neg_h_expert), neg_h_domain);
}

Tensor synergy_loss_term(std::span<const GateRecord> records, const DomainAssignmentStats& stats,
                         SynergyVariant variant) {
  if (records.empty()) throw ContractError("synergy loss needs at least one gate record");
  const std::size_t n = stats.num_experts(), d_count = stats.num_domains();

  std::map<std::size_t, std::map<std::size_t, std::vector<const GateRecord*>>> by_layer;
  for (const auto& r : records) {
    if (r.layer >= stats.layers() || r.domain >= d_count) throw ContractError("gate record outside the stats table");
    by_layer[r.layer][r.domain].push_back(&r);
  }

  Tensor total;
  bool first = true;
  for (const auto& [layer, domains] : by_layer) {
    std::vector<Tensor> rows;
    rows.reserve(d_count);
    for (std::size_t d = 0; d < d_count; ++d) {
      auto it = domains.find(d);
      if (it == domains.end()) {
        auto r = stats.table(layer).row(d);
        rows.emplace_back(ad::Shape{1, n}, std::vector<double>(r.begin(), r.end()));
        continue;
      }
      Tensor acc;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        const GateRecord& rec = *it->second[k];
        const std::size_t idx[1] = {rec.row};
        Tensor g = ad::gather_rows(rec.gates, idx);
        double s = 0.0;
        for (double v : g.values()) s += v;
        if (s > 0.0 && std::abs(s - 1.0) > 1e-12) g = ad::scale(g, 1.0 / s);
        acc = k == 0 ? g : ad::add(acc, g);
      }
      rows.push_back(ad::scale(acc, 1.0 / static_cast<double>(it->second.size())));
    }
    Tensor joint = ad::scale(ad::concat(rows, 0), 1.0 / static_cast<double>(d_count));
    Tensor theta = synergy_of_joint(joint, variant);
    total = first ? theta : ad::add(total, theta);
    first = false;
  }
  return ad::scale(total, 1.0 / static_cast<double>(by_layer.size()));
}

}  // namespace ctta
