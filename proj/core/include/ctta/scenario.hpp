// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctta/rng.hpp"
#include "ctta/tensor.hpp"

namespace ctta {

/// Labeled feature vectors tagged with a domain id.
struct LabeledData {
  std::size_t dim = 0;
  std::vector<double> features;  // size() x dim, row-major
  std::vector<std::size_t> labels;
  std::vector<std::size_t> domains;

  std::size_t size() const { return labels.size(); }
  std::span<const double> sample(std::size_t i) const { return {features.data() + i * dim, dim}; }
  ad::Tensor rows(std::span<const std::size_t> idx) const;
  ad::Tensor row(std::size_t i) const;
  /// Indices of the samples that belong to `domain`.
  std::vector<std::size_t> indices_of(std::size_t domain) const;
  void append(std::span<const double> x, std::size_t label, std::size_t domain);
};

/// Gaussian class clusters: class c has mean separation * u_c (u_c a random unit
/// vector) and isotropic unit covariance.
class SourceGenerator {
 public:
  SourceGenerator(std::uint64_t seed, std::size_t classes, std::size_t dim, double separation = 5.0);

  /// n samples with round-robin labels, tagged with domain 0.
  LabeledData sample(std::size_t n, RngState& rng) const;

  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> mean(std::size_t c) const { return {means_.data() + c * dim_, dim_}; }

 private:
  std::size_t classes_;
  std::size_t dim_;
  std::vector<double> means_;
};

LabeledData make_source(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t dim,
                        double separation = 5.0);

/// Feature-space corruption, applied in this order: rotation in consecutive
/// coordinate planes, circular box blur, gain, constant offset, additive noise.
struct DomainTransform {
  double rotation = 0.0;  // radians
  std::size_t blur = 0;   // half-width; the window covers 2*blur+1 coordinates
  double gain = 1.0;
  double offset = 0.0;
  double noise = 0.0;  // standard deviation
  std::uint64_t noise_seed = 0;

  bool is_identity() const { return rotation == 0.0 && blur == 0 && gain == 1.0 && offset == 0.0 && noise == 0.0; }
};

struct DomainSpec {
  std::size_t id = 0;
  std::string name;
  DomainTransform transform;
};

/// Deterministic in (spec, x, sample_key); the key seeds the additive noise.
std::vector<double> apply_domain(const DomainSpec& spec, std::span<const double> x, std::uint64_t sample_key);

/// Identity, brightened, darkened and fogged copies of the source.
std::vector<DomainSpec> default_sda_specs();
/// Four target corruptions used by the reference scenarios.
std::vector<DomainSpec> default_target_specs();

/// One transformed copy of the source per spec; spec 0 must be the identity.
LabeledData make_sda(const LabeledData& source, std::span<const DomainSpec> specs);

enum class Phase { sda, cds, cgs, eval };
std::string to_string(Phase phase);
Phase phase_from_string(const std::string& name);

struct StreamRecord {
  std::uint64_t t = 0;
  std::size_t domain = 0;
  std::optional<std::size_t> label;
  std::vector<double> x;

  friend bool operator==(const StreamRecord&, const StreamRecord&) = default;
};

/// Ordered records over `rounds` repetitions of one round. Each round is cut into
/// consecutive tasks of `task_length` steps whose nominal domains are `task_domains`.
struct ScenarioStream {
  Phase phase = Phase::cds;
  std::size_t dim = 0;
  std::size_t rounds = 1;
  std::size_t round_length = 0;
  std::size_t task_length = 0;
  std::vector<std::size_t> task_domains;
  std::vector<StreamRecord> records;

  friend bool operator==(const ScenarioStream&, const ScenarioStream&) = default;
};

/// Engine-facing window onto an adaptation stream: features and timesteps only.
class UnlabeledView {
 public:
  explicit UnlabeledView(const ScenarioStream& stream) : stream_(&stream) {}
  std::size_t size() const { return stream_->records.size(); }
  std::size_t dim() const { return stream_->dim; }
  std::uint64_t timestep(std::size_t i) const { return stream_->records[i].t; }
  std::span<const double> features(std::size_t i) const { return stream_->records[i].x; }
  ad::Tensor batch(std::size_t first, std::size_t count) const;

 private:
  const ScenarioStream* stream_;
};

/// Adaptation stream plus its labeled per-domain evaluation mirror.
struct Scenario {
  ScenarioStream stream;
  LabeledData eval;
  std::vector<std::string> domain_names;
};

/// Contiguous domain blocks of `per_domain` samples, repeated `rounds` times.
Scenario make_cds(const SourceGenerator& source, std::span<const DomainSpec> domains, std::size_t per_domain,
                  std::size_t rounds, std::uint64_t seed, bool shuffle_within_blocks = false);

/// Gaussian timestamp schedule for a gradual-shift round.
struct CgsSchedule {
  std::vector<std::vector<double>> raw_positions;  // per domain, before clamping
  std::vector<std::size_t> domain_sequence;        // domain index at timestep t = 1..T
  std::vector<std::size_t> draw_index;             // which draw of that domain lands at t
};

/// Domain i (1-based) draws T/D positions from N((T/D) i, stddev), clamped to
/// [1, T]; all draws are merged by a stable sort on position and reindexed 1..T.
CgsSchedule cgs_schedule(std::size_t num_domains, std::size_t total_steps, double stddev, std::uint64_t seed);

Scenario make_cgs(const SourceGenerator& source, std::span<const DomainSpec> domains, std::size_t total_steps,
                  double stddev, std::uint64_t seed, std::size_t rounds = 1);

ScenarioStream to_stream(const LabeledData& data, Phase phase, bool with_labels = true);

/// One JSON header line, then one JSON object per record: t, domain, label (or null), x.
void write_stream(std::ostream& out, const ScenarioStream& stream);
ScenarioStream read_stream(std::istream& in);

}  // namespace ctta
