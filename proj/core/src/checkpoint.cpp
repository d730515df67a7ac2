// SPDX-License-Identifier: Apache-2.0
#include "ctta/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ctta/config.hpp"
#include "ctta/errors.hpp"

namespace ctta {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) { return {{"rows", m.rows}, {"cols", m.cols}, {"values", m.data}}; }

void matrix_from_json(const json& j, Matrix& m) {
  const auto rows = j.at("rows").get<std::size_t>(), cols = j.at("cols").get<std::size_t>();
  auto values = j.at("values").get<std::vector<double>>();
  if (rows != m.rows || cols != m.cols || values.size() != rows * cols) throw DataError("checkpoint: stats table shape mismatch");
  m.data = std::move(values);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelAssembly& model, const RngState& rng,
                      const std::string& config_hash, InitMode init_mode) {
  json params = json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    const auto v = t.values();
    params[name] = {{"shape", t.shape()},
                    {"trainable", t.requires_grad()},
                    {"values", std::vector<double>(v.begin(), v.end())}};
  }
  json stats = json::array();
  const auto& s = model.stats();
  for (std::size_t l = 0; l < s.layers(); ++l) {
    std::vector<std::uint64_t> counts;
    for (std::size_t d = 0; d < s.num_domains(); ++d) counts.push_back(s.count(l, d));
    stats.push_back({{"table", matrix_to_json(s.table(l))},
                     {"selections", matrix_to_json(s.selections(l))},
                     {"counts", counts}});
  }
  const json j = {{"format", "ctta-checkpoint"},
                  {"version", kCheckpointVersion},
                  {"config_hash", config_hash},
                  {"init_mode", to_string(init_mode)},
                  {"model", model_config_to_json(model.config())},
                  {"dd_frozen", model.dd().frozen},
                  {"params", params},
                  {"stats", stats},
                  {"rng", {{"seed", rng.seed()}, {"counter", rng.counter()}}}};
  out << j.dump() << '\n';
  if (!out) throw DataError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "ctta-checkpoint") throw DataError("checkpoint: not a checkpoint file");
    if (j.at("version") != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
    ModelConfig mc = model_config_from_json(j.at("model"));
    RngState scratch(0);
    Checkpoint ck{ModelAssembly(mc, scratch), RngState(j.at("rng").at("seed").get<std::uint64_t>(),
                                                       j.at("rng").at("counter").get<std::uint64_t>()),
                  j.at("config_hash").get<std::string>(), init_mode_from_string(j.at("init_mode").get<std::string>())};
    const auto& params = j.at("params");
    auto named = ck.model.named_parameters();
    if (params.size() != named.size()) throw DataError("checkpoint: parameter set does not match the model");
    for (auto& [name, t] : named) {
      const auto it = params.find(name);
      if (it == params.end()) throw DataError("checkpoint: missing parameter " + name);
      if (it->at("shape").get<ad::Shape>() != t.shape()) throw DataError("checkpoint: shape mismatch for " + name);
      const auto values = it->at("values").get<std::vector<double>>();
      if (values.size() != t.numel()) throw DataError("checkpoint: size mismatch for " + name);
      auto dst = t.mutable_values();
      std::copy(values.begin(), values.end(), dst.begin());
      t.set_requires_grad(it->at("trainable").get<bool>());
    }
    if (j.at("dd_frozen").get<bool>()) ck.model.dd().freeze();
    const auto& stats = j.at("stats");
    auto& s = ck.model.stats();
    if (stats.size() != s.layers()) throw DataError("checkpoint: stats layer count mismatch");
    for (std::size_t l = 0; l < s.layers(); ++l) {
      matrix_from_json(stats[l].at("table"), s.mutable_table(l));
      matrix_from_json(stats[l].at("selections"), s.mutable_selections(l));
      auto counts = stats[l].at("counts").get<std::vector<std::uint64_t>>();
      if (counts.size() != s.num_domains()) throw DataError("checkpoint: stats count size mismatch");
      s.mutable_counts(l) = std::move(counts);
    }
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ModelAssembly& model, const RngState& rng,
                     const std::string& config_hash, InitMode init_mode) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  write_checkpoint(out, model, rng, config_hash, init_mode);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace ctta
