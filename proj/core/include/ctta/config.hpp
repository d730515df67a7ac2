// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "ctta/engine.hpp"
#include "ctta/model.hpp"
#include "ctta/scenario.hpp"

namespace ctta {

struct SourceSettings {
  std::size_t samples = 800;
  double separation = 5.0;
  std::size_t pretrain_epochs = 20;
  double pretrain_lr = 3e-3;
  std::size_t pretrain_batch = 32;
};

enum class ScenarioKind { cds, cgs };

struct ScenarioSettings {
  ScenarioKind kind = ScenarioKind::cds;
  std::size_t rounds = 10;
  std::size_t per_domain = 400;  // cds block length
  std::size_t cgs_steps = 1600;  // cgs round length T
  double cgs_std = 200.0;
  bool shuffle = false;
  std::vector<DomainSpec> domains = default_target_specs();
};

/// Everything one experiment needs. Missing keys take their defaults; unknown
/// keys are rejected.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 0;
  std::string run_id = "run";
  ModelConfig model;
  SourceSettings source;
  AdaptationConfig adapt;
  std::vector<DomainSpec> sda_domains = default_sda_specs();
  ScenarioSettings scenario;
  std::string output_dir = "out";

  void validate() const;
  /// SHA-256 over the sections that determine the initialized checkpoint
  /// (version, seed, model, source, init, SDA domains).
  std::string init_hash() const;
};

inline constexpr int kConfigVersion = 1;

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json domain_spec_to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const nlohmann::json& j, std::size_t id);

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& name);

}  // namespace ctta
