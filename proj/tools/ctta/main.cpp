// SPDX-License-Identifier: Apache-2.0
// ctta: initialize, adapt, report, dump scenarios and count parameters.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ctta/errors.hpp"
#include "ctta/harness.hpp"
#include "ctta/mode_layer.hpp"

namespace {

ctta::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto config = ctta::load_config(path);
  if (seed) config.seed = *seed;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual test-time adaptation with mixtures of domain low-rank experts"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, output_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> metrics_files;
  bool compare = false;
  std::string phase = "cds";
  std::vector<std::uint64_t> dims, ranks, blocks;
  std::uint64_t experts = 4, domains = 4;

  auto* init = app.add_subcommand("init", "pretrain the source model, initialize MoDE layers, write a checkpoint");
  init->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
  init->add_option("-o,--checkpoint", checkpoint_path, "checkpoint to write")->required();
  init->add_option("--seed", seed, "override the config seed");

  auto* adapt = app.add_subcommand("adapt", "run the continual scenario from a checkpoint");
  adapt->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
  adapt->add_option("-k,--checkpoint", checkpoint_path, "initialized checkpoint")->required();
  adapt->add_option("--seed", seed, "override the config seed");

  auto* report = app.add_subcommand("report", "print summary tables of metrics files");
  report->add_option("files", metrics_files, "metrics CSV or summary JSON files")->required();
  report->add_flag("--compare", compare, "print per-cell differences of the second run against the first");

  auto* gen = app.add_subcommand("scenario-gen", "dump one phase of the scenario to a stream file");
  gen->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
  gen->add_option("-p,--phase", phase, "sda, cds, cgs or eval")->check(CLI::IsMember({"sda", "cds", "cgs", "eval"}));
  gen->add_option("-o,--output", output_path, "stream file to write")->required();
  gen->add_option("--seed", seed, "override the config seed");

  auto* count = app.add_subcommand("param-count", "count trainable MoDE parameters of an architecture");
  count->add_option("--dims", dims, "width per stage")->required()->delimiter(',');
  count->add_option("--ranks", ranks, "MoDE rank per stage (0 = none)")->required()->delimiter(',');
  count->add_option("--blocks", blocks, "blocks per stage")->required()->delimiter(',');
  count->add_option("--experts", experts, "experts per layer (N)");
  count->add_option("--domains", domains, "domain routers per layer (D)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit cleanly; usage errors count as config errors.
    return app.exit(e) == 0 ? 0 : ctta::kExitConfig;
  }

  return ctta::run_guarded(
      [&] {
        if (*init) {
          const auto summary = ctta::cmd_init(load(config_path, seed), checkpoint_path, std::cerr);
          std::cout << "param_count " << summary.mode_params << '\n';
        } else if (*adapt) {
          const auto out = ctta::cmd_adapt(load(config_path, seed), checkpoint_path, std::cerr);
          std::cout << out.metrics_csv.string() << '\n';
        } else if (*report) {
          ctta::cmd_report(metrics_files, compare, std::cout);
        } else if (*gen) {
          ctta::cmd_scenario_gen(load(config_path, seed), ctta::phase_from_string(phase), output_path, std::cerr);
        } else if (*count) {
          try {
            std::cout << ctta::param_count(dims, ranks, blocks, experts, domains) << '\n';
          } catch (const ctta::Error& e) {
            throw ctta::ConfigError(e.what());
          }
        }
      },
      std::cerr);
}
