// SPDX-License-Identifier: Apache-2.0
#include "ctta/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>

#include "ctta/errors.hpp"

namespace ctta {

using ad::Tensor;
using nlohmann::json;

ad::Tensor LabeledData::rows(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * dim);
  for (auto i : idx) {
    auto s = sample(i);
    out.insert(out.end(), s.begin(), s.end());
  }
  return Tensor({idx.size(), dim}, std::move(out));
}

ad::Tensor LabeledData::row(std::size_t i) const {
  auto s = sample(i);
  return Tensor({1, dim}, std::vector<double>(s.begin(), s.end()));
}

std::vector<std::size_t> LabeledData::indices_of(std::size_t domain) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i)
    if (domains[i] == domain) out.push_back(i);
  return out;
}

void LabeledData::append(std::span<const double> x, std::size_t label, std::size_t domain) {
  if (x.size() != dim) throw DimensionError("sample width differs from the dataset");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
  domains.push_back(domain);
}

SourceGenerator::SourceGenerator(std::uint64_t seed, std::size_t classes, std::size_t dim, double separation)
    : classes_(classes), dim_(dim), means_(classes * dim) {
  if (classes < 2 || dim == 0) throw ContractError("source needs at least two classes and a positive width");
  RngState rng = RngState(seed).split(0);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      means_[c * dim + j] = rng.normal();
      norm += means_[c * dim + j] * means_[c * dim + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) means_[c * dim + j] *= separation / norm;
  }
}

LabeledData SourceGenerator::sample(std::size_t n, RngState& rng) const {
  LabeledData out;
  out.dim = dim_;
  out.features.reserve(n * dim_);
  std::vector<double> x(dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes_;
    for (std::size_t j = 0; j < dim_; ++j) x[j] = means_[c * dim_ + j] + rng.normal();
    out.append(x, c, 0);
  }
  return out;
}

LabeledData make_source(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t dim, double separation) {
  if (n < classes) throw ContractError("make_source: need at least one sample per class");
  SourceGenerator gen(seed, classes, dim, separation);
  RngState rng = RngState(seed).split(1);
  return gen.sample(n, rng);
}

std::vector<double> apply_domain(const DomainSpec& spec, std::span<const double> x, std::uint64_t sample_key) {
  const auto& t = spec.transform;
  const std::size_t n = x.size();
  std::vector<double> v(x.begin(), x.end());
  if (t.rotation != 0.0) {
    const double c = std::cos(t.rotation), s = std::sin(t.rotation);
    for (std::size_t j = 0; j + 1 < n; j += 2) {
      const double a = v[j], b = v[j + 1];
      v[j] = c * a - s * b;
      v[j + 1] = s * a + c * b;
    }
  }
  if (t.blur > 0 && n > 0) {
    std::vector<double> blurred(n, 0.0);
    const auto w = static_cast<std::ptrdiff_t>(t.blur);
    const auto nn = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t j = 0; j < nn; ++j) {
      double s = 0.0;
      for (std::ptrdiff_t k = -w; k <= w; ++k) s += v[static_cast<std::size_t>(((j + k) % nn + nn) % nn)];
      blurred[static_cast<std::size_t>(j)] = s / static_cast<double>(2 * w + 1);
    }
    v = std::move(blurred);
  }
  for (auto& e : v) e = e * t.gain + t.offset;
  if (t.noise > 0.0) {
    RngState rng = RngState(t.noise_seed ^ (0xA24BAED4963EE407ULL * (spec.id + 1))).split(sample_key);
    for (auto& e : v) e += t.noise * rng.normal();
  }
  return v;
}

std::vector<DomainSpec> default_sda_specs() {
  std::vector<DomainSpec> specs(4);
  specs[0] = {0, "source", {}};
  specs[1] = {1, "bright", {}};
  specs[1].transform.gain = 1.5;
  specs[1].transform.offset = 2.5;
  specs[2] = {2, "dark", {}};
  specs[2].transform.gain = 0.45;
  specs[2].transform.offset = -2.5;
  specs[3] = {3, "fog", {}};
  specs[3].transform.blur = 2;
  specs[3].transform.gain = 0.8;
  specs[3].transform.offset = 6.0;
  return specs;
}

std::vector<DomainSpec> default_target_specs() {
  std::vector<DomainSpec> specs(4);
  specs[0] = {0, "fog", {}};
  specs[0].transform.blur = 1;
  specs[0].transform.gain = 0.8;
  specs[0].transform.offset = 0.5;
  specs[1] = {1, "night", {}};
  specs[1].transform.gain = 0.5;
  specs[1].transform.noise = 0.4;
  specs[1].transform.noise_seed = 11;
  specs[2] = {2, "rain", {}};
  specs[2].transform.noise = 1.0;
  specs[2].transform.rotation = 0.15;
  specs[2].transform.noise_seed = 13;
  specs[3] = {3, "snow", {}};
  specs[3].transform.gain = 1.4;
  specs[3].transform.offset = 0.6;
  return specs;
}

LabeledData make_sda(const LabeledData& source, std::span<const DomainSpec> specs) {
  if (specs.empty()) throw ContractError("make_sda: at least one domain spec required");
  if (!specs[0].transform.is_identity()) throw ContractError("make_sda: spec 0 must be the identity (source) domain");
  LabeledData out;
  out.dim = source.dim;
  out.features.reserve(source.features.size() * specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      out.append(apply_domain(specs[d], source.sample(i), i), source.labels[i], d);
    }
  }
  return out;
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::sda:
      return "sda";
    case Phase::cds:
      return "cds";
    case Phase::cgs:
      return "cgs";
    case Phase::eval:
      return "eval";
  }
  return "?";
}

Phase phase_from_string(const std::string& name) {
  if (name == "sda") return Phase::sda;
  if (name == "cds") return Phase::cds;
  if (name == "cgs") return Phase::cgs;
  if (name == "eval") return Phase::eval;
  throw DataError("unknown stream phase '" + name + "'");
}

ad::Tensor UnlabeledView::batch(std::size_t first, std::size_t count) const {
  std::vector<double> out;
  out.reserve(count * dim());
  for (std::size_t i = first; i < first + count; ++i) {
    auto f = features(i);
    out.insert(out.end(), f.begin(), f.end());
  }
  return Tensor({count, dim()}, std::move(out));
}

namespace {

// Per-domain pool of clean samples drawn from the source generator and corrupted.
LabeledData domain_pool(const SourceGenerator& source, const DomainSpec& spec, std::size_t count, std::uint64_t seed,
                        std::size_t position) {
  RngState rng = RngState(seed).split(100 + position);
  LabeledData clean = source.sample(count, rng);
  // Mix labels so a pool is not sorted round-robin by class.
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  RngState perm = RngState(seed).split(500 + position);
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[perm.uniform_index(i)]);
  LabeledData out;
  out.dim = source.dim();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[k];
    out.append(apply_domain(spec, clean.sample(i), (seed << 20) ^ (position << 16) ^ i), clean.labels[i], position);
  }
  return out;
}

}  // namespace

Scenario make_cds(const SourceGenerator& source, std::span<const DomainSpec> domains, std::size_t per_domain,
                  std::size_t rounds, std::uint64_t seed, bool shuffle_within_blocks) {
  if (rounds < 1) throw ContractError("make_cds: at least one round required");
  if (domains.empty() || per_domain == 0) throw ContractError("make_cds: empty scenario");
  Scenario sc;
  sc.eval.dim = source.dim();
  std::vector<LabeledData> pools;
  for (std::size_t j = 0; j < domains.size(); ++j) {
    pools.push_back(domain_pool(source, domains[j], per_domain, seed, j));
    sc.domain_names.push_back(domains[j].name);
    for (std::size_t i = 0; i < per_domain; ++i) sc.eval.append(pools[j].sample(i), pools[j].labels[i], j);
  }

  auto& st = sc.stream;
  st.phase = Phase::cds;
  st.dim = source.dim();
  st.rounds = rounds;
  st.round_length = per_domain * domains.size();
  st.task_length = per_domain;
  st.task_domains.resize(domains.size());
  std::iota(st.task_domains.begin(), st.task_domains.end(), 0);

  std::vector<std::vector<std::size_t>> block_order(domains.size(), std::vector<std::size_t>(per_domain));
  for (std::size_t j = 0; j < domains.size(); ++j) {
    std::iota(block_order[j].begin(), block_order[j].end(), 0);
    if (shuffle_within_blocks) {
      RngState rng = RngState(seed).split(900 + j);
      for (std::size_t i = per_domain; i > 1; --i) std::swap(block_order[j][i - 1], block_order[j][rng.uniform_index(i)]);
    }
  }
  st.records.reserve(rounds * st.round_length);
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < rounds; ++k)
    for (std::size_t j = 0; j < domains.size(); ++j)
      for (auto i : block_order[j]) {
        auto s = pools[j].sample(i);
        st.records.push_back({++t, j, std::nullopt, std::vector<double>(s.begin(), s.end())});
      }
  return sc;
}

CgsSchedule cgs_schedule(std::size_t num_domains, std::size_t total_steps, double stddev, std::uint64_t seed) {
  if (num_domains == 0 || total_steps == 0) throw ContractError("cgs: empty schedule");
  if (total_steps % num_domains != 0) {
    throw ContractError("cgs: T=" + std::to_string(total_steps) + " is not divisible by D=" + std::to_string(num_domains));
  }
  if (stddev < 0.0) throw ContractError("cgs: negative standard deviation");
  const std::size_t per = total_steps / num_domains;
  CgsSchedule sched;
  struct Draw {
    double position;
    std::size_t domain;
    std::size_t index;
  };
  std::vector<Draw> draws;
  draws.reserve(total_steps);
  for (std::size_t i = 0; i < num_domains; ++i) {
    RngState rng = RngState(seed).split(200 + i);
    const double centre = static_cast<double>(per * (i + 1));
    std::vector<double> raw(per);
    for (std::size_t k = 0; k < per; ++k) {
      raw[k] = centre + stddev * rng.normal();
      draws.push_back({std::clamp(raw[k], 1.0, static_cast<double>(total_steps)), i, k});
    }
    sched.raw_positions.push_back(std::move(raw));
  }
  std::stable_sort(draws.begin(), draws.end(), [](const Draw& a, const Draw& b) { return a.position < b.position; });
  for (const auto& d : draws) {
    sched.domain_sequence.push_back(d.domain);
    sched.draw_index.push_back(d.index);
  }
  return sched;
}

Scenario make_cgs(const SourceGenerator& source, std::span<const DomainSpec> domains, std::size_t total_steps,
                  double stddev, std::uint64_t seed, std::size_t rounds) {
  if (rounds < 1) throw ContractError("make_cgs: at least one round required");
  const auto sched = cgs_schedule(domains.size(), total_steps, stddev, seed);
  const std::size_t per = total_steps / domains.size();
  Scenario sc;
  sc.eval.dim = source.dim();
  std::vector<LabeledData> pools;
  for (std::size_t j = 0; j < domains.size(); ++j) {
    pools.push_back(domain_pool(source, domains[j], per, seed, j));
    sc.domain_names.push_back(domains[j].name);
    for (std::size_t i = 0; i < per; ++i) sc.eval.append(pools[j].sample(i), pools[j].labels[i], j);
  }
  auto& st = sc.stream;
  st.phase = Phase::cgs;
  st.dim = source.dim();
  st.rounds = rounds;
  st.round_length = total_steps;
  st.task_length = per;
  st.task_domains.resize(domains.size());
  std::iota(st.task_domains.begin(), st.task_domains.end(), 0);
  std::uint64_t t = 0;
  for (std::size_t k = 0; k < rounds; ++k)
    for (std::size_t p = 0; p < total_steps; ++p) {
      const std::size_t j = sched.domain_sequence[p];
      auto s = pools[j].sample(sched.draw_index[p]);
      st.records.push_back({++t, j, std::nullopt, std::vector<double>(s.begin(), s.end())});
    }
  return sc;
}

ScenarioStream to_stream(const LabeledData& data, Phase phase, bool with_labels) {
  ScenarioStream st;
  st.phase = phase;
  st.dim = data.dim;
  st.round_length = data.size();
  st.task_length = data.size();
  st.task_domains = {0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto s = data.sample(i);
    std::optional<std::size_t> label;
    if (with_labels) label = data.labels[i];
    st.records.push_back({i + 1, data.domains[i], label, std::vector<double>(s.begin(), s.end())});
  }
  return st;
}

void write_stream(std::ostream& out, const ScenarioStream& stream) {
  json header = {{"format", "ctta-stream"},
                 {"version", 1},
                 {"phase", to_string(stream.phase)},
                 {"dim", stream.dim},
                 {"rounds", stream.rounds},
                 {"round_length", stream.round_length},
                 {"task_length", stream.task_length},
                 {"task_domains", stream.task_domains}};
  out << header.dump() << '\n';
  for (const auto& r : stream.records) {
    json line = {{"t", r.t}, {"domain", r.domain}, {"label", nullptr}, {"x", r.x}};
    if (r.label) line["label"] = *r.label;
    out << line.dump() << '\n';
  }
}

ScenarioStream read_stream(std::istream& in) {
  ScenarioStream st;
  std::string line;
  if (!std::getline(in, line)) throw DataError("stream file is empty");
  try {
    const json header = json::parse(line);
    if (header.at("format") != "ctta-stream") throw DataError("not a ctta stream file");
    if (header.at("version") != 1) throw DataError("unsupported stream version");
    st.phase = phase_from_string(header.at("phase").get<std::string>());
    st.dim = header.at("dim").get<std::size_t>();
    st.rounds = header.at("rounds").get<std::size_t>();
    st.round_length = header.at("round_length").get<std::size_t>();
    st.task_length = header.at("task_length").get<std::size_t>();
    st.task_domains = header.at("task_domains").get<std::vector<std::size_t>>();
    std::uint64_t last = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      StreamRecord r;
      r.t = j.at("t").get<std::uint64_t>();
      if (r.t <= last) throw DataError("stream timesteps must be strictly increasing");
      last = r.t;
      r.domain = j.at("domain").get<std::size_t>();
      if (!j.at("label").is_null()) r.label = j.at("label").get<std::size_t>();
      r.x = j.at("x").get<std::vector<double>>();
      if (r.x.size() != st.dim) throw DataError("stream record width differs from the header");
      st.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed stream file: ") + e.what());
  }
  return st;
}

}  // namespace ctta
