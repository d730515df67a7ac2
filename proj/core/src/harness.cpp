// SPDX-License-Identifier: Apache-2.0
#include "ctta/harness.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>

#include "ctta/checkpoint.hpp"
#include "ctta/errors.hpp"
#include "ctta/model.hpp"

namespace ctta {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const SourceAccessError*>(&e)) return kExitData;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  return kExitFailure;
}

int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

fs::path output_dir(const ExperimentConfig& config) {
  if (const char* env = std::getenv("CTTA_OUTPUT_DIR"); env && *env) return env;
  return config.output_dir;
}

SourceGenerator source_generator(const ExperimentConfig& config) {
  return SourceGenerator(config.seed, config.model.classes, config.model.input_dim, config.source.separation);
}

LabeledData source_data(const ExperimentConfig& config) {
  return make_source(config.seed, config.source.samples, config.model.classes, config.model.input_dim,
                     config.source.separation);
}

LabeledData sda_data(const ExperimentConfig& config) { return make_sda(source_data(config), config.sda_domains); }

Scenario build_scenario(const ExperimentConfig& config) {
  const auto gen = source_generator(config);
  const auto& s = config.scenario;
  const std::uint64_t seed = RngState(config.seed).split(20).next_u64();
  if (s.kind == ScenarioKind::cds) return make_cds(gen, s.domains, s.per_domain, s.rounds, seed, s.shuffle);
  return make_cgs(gen, s.domains, s.cgs_steps, s.cgs_std, seed, s.rounds);
}

InitializedModel initialize_model(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  const RngState root(config.seed);
  RngState init_rng = root.split(10);
  InitializedModel out{ModelAssembly(config.model, init_rng), root.split(13), {}};
  auto& model = out.model;
  auto& summary = out.summary;
  summary.config_hash = config.init_hash();

  const LabeledData source = source_data(config);
  RngState pre_rng = root.split(11);
  pretrain_source(model, source,
                  {.epochs = config.source.pretrain_epochs,
                   .batch_size = config.source.pretrain_batch,
                   .lr = config.source.pretrain_lr},
                  pre_rng);
  model.set_mode_enabled(false);
  const std::size_t zero = 0;
  RngState eval_rng(0);
  summary.source_accuracy = accuracy(model, source, {&zero, 1}, eval_rng);
  model.set_mode_enabled(true);
  if (log) *log << "source accuracy " << format_number(summary.source_accuracy) << '\n';

  DataHandle handle(config.adapt.init_mode == InitMode::sda ? make_sda(source, config.sda_domains) : source);
  RngState phase_rng = root.split(12);
  summary.report = init_phase(model, config.adapt, &handle, phase_rng);
  if (log) {
    for (std::size_t e = 0; e < summary.report.epoch_loss.size(); ++e) {
      *log << "init epoch " << e + 1 << " loss " << format_number(summary.report.epoch_loss[e]);
      if (e + 1 < summary.report.synergy.size()) *log << " synergy " << format_number(summary.report.synergy[e + 1]);
      *log << '\n';
    }
  }
  summary.mode_params = model.mode_param_count();
  return out;
}

InitSummary cmd_init(const ExperimentConfig& config, const fs::path& checkpoint, std::ostream& log) {
  InitializedModel init = initialize_model(config, &log);
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  save_checkpoint(checkpoint.string(), init.model, init.rng, init.summary.config_hash, config.adapt.init_mode);
  log << "mode parameters " << init.summary.mode_params << '\n';
  log << "config hash " << init.summary.config_hash << '\n';
  log << "checkpoint " << checkpoint.string() << '\n';
  return init.summary;
}

namespace {

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  body(out);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

AdaptSummary cmd_adapt(const ExperimentConfig& config, const fs::path& checkpoint, std::ostream& log) {
  config.validate();
  Checkpoint ck = load_checkpoint(checkpoint.string());
  const std::string hash = config.init_hash();
  if (ck.config_hash != hash) {
    throw ConfigError("checkpoint was initialized under a different configuration (hash " + ck.config_hash +
                      ", expected " + hash + ")");
  }
  const Scenario scenario = build_scenario(config);
  AdaptSummary out;
  out.metrics = run_ctta(ck.model, scenario, config.adapt, ck.rng);

  const fs::path dir = output_dir(config);
  fs::create_directories(dir);
  const std::string& id = config.run_id;
  out.metrics_csv = dir / (id + "_metrics.csv");
  out.summary_json = dir / (id + "_summary.json");
  write_file(out.metrics_csv, [&](std::ostream& s) { write_metrics_csv(s, id, out.metrics); });
  write_file(out.summary_json, [&](std::ostream& s) { write_summary_json(s, id, out.metrics); });
  for (std::size_t l = 0; l < out.metrics.expert_freq.size(); ++l) {
    out.expert_freq.push_back(dir / (id + "_expert_freq_layer" + std::to_string(l) + ".csv"));
    write_file(out.expert_freq.back(), [&](std::ostream& s) { write_expert_frequency_csv(s, out.metrics.expert_freq[l]); });
  }
  out.final_checkpoint = dir / (id + "_final.ckpt.json");
  save_checkpoint(out.final_checkpoint.string(), ck.model, ck.rng, ck.config_hash, ck.init_mode);

  const auto& a = out.metrics.accuracy;
  log << "rounds " << a.rows << " domains " << a.cols << '\n';
  log << "round 1 mean " << format_number(avg_acc(a, 0)) << " last round mean " << format_number(avg_acc(a, a.rows - 1))
      << '\n';
  log << "metrics " << out.metrics_csv.string() << '\n';
  return out;
}

void cmd_report(const std::vector<std::string>& files, bool compare, std::ostream& out) {
  if (files.empty()) throw ConfigError("report: no metrics files given");
  if (compare) {
    if (files.size() != 2) throw ConfigError("report --compare needs exactly two files");
    print_comparison(out, read_metrics_file(files[0]), read_metrics_file(files[1]));
    return;
  }
  for (const auto& f : files) print_report(out, read_metrics_file(f));
}

void cmd_scenario_gen(const ExperimentConfig& config, Phase phase, const fs::path& path, std::ostream& log) {
  config.validate();
  ScenarioStream stream;
  switch (phase) {
    case Phase::sda:
      stream = to_stream(sda_data(config), Phase::sda);
      break;
    case Phase::eval:
      stream = to_stream(build_scenario(config).eval, Phase::eval);
      break;
    case Phase::cds:
    case Phase::cgs: {
      const bool want_cgs = phase == Phase::cgs;
      if (want_cgs != (config.scenario.kind == ScenarioKind::cgs)) {
        throw ConfigError("requested phase " + to_string(phase) + " does not match scenario.kind");
      }
      stream = build_scenario(config).stream;
      break;
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, [&](std::ostream& s) { write_stream(s, stream); });
  log << to_string(phase) << " records " << stream.records.size() << " -> " << path.string() << '\n';
}

}  // namespace ctta
