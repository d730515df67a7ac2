// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ctta/matrix.hpp"
#include "ctta/mode_layer.hpp"
#include "ctta/tensor.hpp"

namespace ctta {

enum class SynergyVariant { mutual_information, negative_entropy };

/// Running estimate of P(expert | domain) for every MoDE layer.
///
/// Each layer owns a D x N table whose rows start at the uniform prior and
/// move toward observed gates by an exponential moving average. A parallel
/// table counts how often each expert was in a sample's support, which feeds
/// the expert-frequency report.
class DomainAssignmentStats {
 public:
  DomainAssignmentStats() = default;
  DomainAssignmentStats(std::size_t layers, std::size_t num_domains, std::size_t num_experts, double ema_beta = 0.9);

  void update(const GateRecord& record);

  std::size_t layers() const { return tables_.size(); }
  std::size_t num_domains() const { return num_domains_; }
  std::size_t num_experts() const { return num_experts_; }
  double ema_beta() const { return ema_beta_; }

  const Matrix& table(std::size_t layer) const { return tables_.at(layer); }
  const Matrix& selections(std::size_t layer) const { return selections_.at(layer); }
  std::uint64_t count(std::size_t layer, std::size_t domain) const { return counts_.at(layer).at(domain); }

  /// Direct state access for checkpoint restore.
  Matrix& mutable_table(std::size_t layer) { return tables_.at(layer); }
  Matrix& mutable_selections(std::size_t layer) { return selections_.at(layer); }
  std::vector<std::uint64_t>& mutable_counts(std::size_t layer) { return counts_.at(layer); }

 private:
  std::size_t num_domains_ = 0;
  std::size_t num_experts_ = 0;
  double ema_beta_ = 0.9;
  std::vector<Matrix> tables_;
  std::vector<Matrix> selections_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

void update_stats(DomainAssignmentStats& stats, const GateRecord& record);

/// P(A_i, d) = P(A_i | d) / D with a uniform domain prior.
Matrix joint_distribution(const DomainAssignmentStats& stats, std::size_t layer);

/// Mutual information (nats) between domain (rows) and expert (columns).
double synergy_mi(const Matrix& joint);
/// sum p ln p over all cells (<= 0).
double synergy_negentropy(const Matrix& joint);

/// Differentiable counterpart on a D x N joint tensor.
ad::Tensor synergy_of_joint(const ad::Tensor& joint, SynergyVariant variant);

/// Synergy of the current step, averaged over layers. For every (layer, domain)
/// seen in `records` the stats row is replaced by the mean of this step's gates
/// for that domain; all other rows are constants from `stats`. The value is to
/// be maximized.
ad::Tensor synergy_loss_term(std::span<const GateRecord> records, const DomainAssignmentStats& stats,
                             SynergyVariant variant = SynergyVariant::mutual_information);

}  // namespace ctta
