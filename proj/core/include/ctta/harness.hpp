// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctta/config.hpp"
#include "ctta/engine.hpp"
#include "ctta/metrics.hpp"
#include "ctta/scenario.hpp"

namespace ctta {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

/// Maps an exception to the process exit code.
int exit_code_for(const std::exception& e);
/// Runs `body`, printing any error to `err`; returns the exit code.
int run_guarded(const std::function<void()>& body, std::ostream& err);

/// `CTTA_OUTPUT_DIR` when set, otherwise the configured directory.
std::filesystem::path output_dir(const ExperimentConfig& config);

SourceGenerator source_generator(const ExperimentConfig& config);
LabeledData source_data(const ExperimentConfig& config);
LabeledData sda_data(const ExperimentConfig& config);
Scenario build_scenario(const ExperimentConfig& config);

struct InitSummary {
  std::string config_hash;
  double source_accuracy = 0.0;
  std::uint64_t mode_params = 0;
  InitReport report;
};

struct InitializedModel {
  ModelAssembly model;
  /// State handed to the adaptation run.
  RngState rng;
  InitSummary summary;
};

/// Pretrains the source model and runs the configured initialization.
InitializedModel initialize_model(const ExperimentConfig& config, std::ostream* log = nullptr);

/// initialize_model, then writes the checkpoint.
InitSummary cmd_init(const ExperimentConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

struct AdaptSummary {
  RoundMetrics metrics;
  std::filesystem::path metrics_csv;
  std::filesystem::path summary_json;
  std::vector<std::filesystem::path> expert_freq;
  std::filesystem::path final_checkpoint;
};

/// Runs the configured scenario from an initialized checkpoint. Refuses a
/// checkpoint whose config hash differs from `config`.
AdaptSummary cmd_adapt(const ExperimentConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

/// One report per file, or with `compare` the differences of the second run
/// against the first.
void cmd_report(const std::vector<std::string>& files, bool compare, std::ostream& out);

/// Writes the records of one phase (sda, cds, cgs or eval) to `path`.
void cmd_scenario_gen(const ExperimentConfig& config, Phase phase, const std::filesystem::path& path, std::ostream& log);

}  // namespace ctta
