// SPDX-License-Identifier: Apache-2.0
#include "ctta/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "ctta/errors.hpp"
#include "ctta/hashing.hpp"

namespace ctta {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

template <class E>
E enum_from(const std::string& name, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
  for (const auto& [n, v] : table)
    if (name == n) return v;
  throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

template <class E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [n, v] : table)
    if (value == v) return n;
  return "?";
}

const std::initializer_list<std::pair<const char*, RoutingPolicy>> kPolicies = {
    {"topk", RoutingPolicy::topk}, {"stochastic", RoutingPolicy::stochastic}, {"fixed_multitask", RoutingPolicy::fixed_multitask}};
const std::initializer_list<std::pair<const char*, Activation>> kActivations = {
    {"gelu", Activation::gelu}, {"relu", Activation::relu}, {"identity", Activation::identity}};
const std::initializer_list<std::pair<const char*, GateScope>> kScopes = {{"retained", GateScope::retained},
                                                                          {"full", GateScope::full}};
const std::initializer_list<std::pair<const char*, InitMode>> kInitModes = {
    {"random", InitMode::random}, {"source_only", InitMode::source_only}, {"sda", InitMode::sda}};
const std::initializer_list<std::pair<const char*, Method>> kMethods = {{"mode", Method::mode}, {"tent", Method::tent}};
const std::initializer_list<std::pair<const char*, SynergyVariant>> kVariants = {
    {"mi", SynergyVariant::mutual_information}, {"negentropy", SynergyVariant::negative_entropy}};
const std::initializer_list<std::pair<const char*, ScenarioKind>> kKinds = {{"cds", ScenarioKind::cds},
                                                                            {"cgs", ScenarioKind::cgs}};

json source_to_json(const SourceSettings& s) {
  return {{"samples", s.samples},
          {"separation", s.separation},
          {"pretrain_epochs", s.pretrain_epochs},
          {"pretrain_lr", s.pretrain_lr},
          {"pretrain_batch", s.pretrain_batch}};
}

json init_to_json(const ExperimentConfig& c) {
  const auto& a = c.adapt;
  json domains = json::array();
  for (const auto& d : c.sda_domains) domains.push_back(domain_spec_to_json(d));
  return {{"mode", to_string(a.init_mode)},
          {"epochs", a.epochs_init},
          {"lr", a.lr_init},
          {"lambda_d", a.lambda_d},
          {"lambda_m", a.lambda_m},
          {"weight_decay", a.weight_decay},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"batch_size", a.batch_size},
          {"noise", a.noise_init},
          {"synergy", enum_name(a.synergy, kVariants)},
          {"sda_domains", domains}};
}

}  // namespace

std::string to_string(InitMode mode) { return enum_name(mode, kInitModes); }
InitMode init_mode_from_string(const std::string& name) { return enum_from(name, kInitModes, "init mode"); }

json domain_spec_to_json(const DomainSpec& spec) {
  const auto& t = spec.transform;
  return {{"name", spec.name},     {"rotation", t.rotation}, {"blur", t.blur},
          {"gain", t.gain},        {"offset", t.offset},     {"noise", t.noise},
          {"noise_seed", t.noise_seed}};
}

DomainSpec domain_spec_from_json(const json& j, std::size_t id) {
  reject_unknown(j, {"name", "rotation", "blur", "gain", "offset", "noise", "noise_seed"}, "domain spec");
  DomainSpec s;
  s.id = id;
  s.name = "domain" + std::to_string(id);
  read(j, "name", s.name);
  read(j, "rotation", s.transform.rotation);
  read(j, "blur", s.transform.blur);
  read(j, "gain", s.transform.gain);
  read(j, "offset", s.transform.offset);
  read(j, "noise", s.transform.noise);
  read(j, "noise_seed", s.transform.noise_seed);
  if (s.name.empty() || s.name.find(',') != std::string::npos) throw ConfigError("domain names must be non-empty and comma-free");
  return s;
}

json model_config_to_json(const ModelConfig& m) {
  return {{"input_dim", m.input_dim},
          {"stage_dims", m.stage_dims},
          {"stage_blocks", m.stage_blocks},
          {"stage_ranks", m.stage_ranks},
          {"classes", m.classes},
          {"experts", m.num_experts},
          {"domains", m.num_domains},
          {"top_k", m.top_k},
          {"routing", enum_name(m.policy, kPolicies)},
          {"activation", enum_name(m.activation, kActivations)},
          {"gate_scope", enum_name(m.scope, kScopes)},
          {"dd_hidden", m.dd_hidden},
          {"ema_beta", m.ema_beta}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                 {"input_dim", "stage_dims", "stage_blocks", "stage_ranks", "classes", "experts", "domains", "top_k",
                  "routing", "activation", "gate_scope", "dd_hidden", "ema_beta"},
                 "model");
  ModelConfig m;
  read(j, "input_dim", m.input_dim);
  read(j, "stage_dims", m.stage_dims);
  read(j, "stage_blocks", m.stage_blocks);
  read(j, "stage_ranks", m.stage_ranks);
  read(j, "classes", m.classes);
  read(j, "experts", m.num_experts);
  read(j, "domains", m.num_domains);
  read(j, "top_k", m.top_k);
  read(j, "dd_hidden", m.dd_hidden);
  read(j, "ema_beta", m.ema_beta);
  if (j.contains("routing")) m.policy = enum_from(j["routing"].get<std::string>(), kPolicies, "routing policy");
  if (j.contains("activation")) m.activation = enum_from(j["activation"].get<std::string>(), kActivations, "activation");
  if (j.contains("gate_scope")) m.scope = enum_from(j["gate_scope"].get<std::string>(), kScopes, "gate scope");
  return m;
}

json config_to_json(const ExperimentConfig& c) {
  const auto& a = c.adapt;
  const auto& s = c.scenario;
  json targets = json::array();
  for (const auto& d : s.domains) targets.push_back(domain_spec_to_json(d));
  return {{"version", c.version},
          {"seed", c.seed},
          {"run_id", c.run_id},
          {"model", model_config_to_json(c.model)},
          {"source", source_to_json(c.source)},
          {"init", init_to_json(c)},
          {"adapt",
           {{"method", enum_name(a.method, kMethods)},
            {"lr", a.lr_tta},
            {"kappa", a.kappa},
            {"noise", a.noise_tta},
            {"restore_p", a.restore_p},
            {"freeze_routers", a.freeze_routers_tta},
            {"tent_lr", a.tent_lr}}},
          {"scenario",
           {{"kind", enum_name(s.kind, kKinds)},
            {"rounds", s.rounds},
            {"per_domain", s.per_domain},
            {"cgs_steps", s.cgs_steps},
            {"cgs_std", s.cgs_std},
            {"shuffle", s.shuffle},
            {"domains", targets}}},
          {"output", {{"dir", c.output_dir}}}};
}

void ExperimentConfig::validate() const {
  try {
    if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));
    if (run_id.empty() || run_id.find_first_of(",/\\") != std::string::npos) throw ConfigError("run_id must be a plain name");
    model.validate();
    adapt.validate();
    if (source.samples < model.classes) throw ConfigError("source.samples must cover every class");
    if (source.pretrain_batch == 0) throw ConfigError("source.pretrain_batch must be positive");
    if (adapt.init_mode == InitMode::sda) {
      if (sda_domains.size() != model.num_domains) {
        throw ConfigError("SDA needs one domain spec per router (" + std::to_string(model.num_domains) + ")");
      }
      if (!sda_domains[0].transform.is_identity()) throw ConfigError("the first SDA domain must be the identity");
    }
    if (scenario.domains.empty()) throw ConfigError("scenario needs at least one target domain");
    if (scenario.rounds < 1) throw ConfigError("scenario.rounds must be at least 1");
    if (scenario.kind == ScenarioKind::cds && scenario.per_domain == 0) throw ConfigError("scenario.per_domain must be positive");
    if (scenario.kind == ScenarioKind::cgs && scenario.cgs_steps % scenario.domains.size() != 0) {
      throw ConfigError("scenario.cgs_steps must be divisible by the number of target domains");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::string ExperimentConfig::init_hash() const {
  const json j = config_to_json(*this);
  const json subset = {{"version", j["version"]}, {"seed", j["seed"]},   {"model", j["model"]},
                       {"source", j["source"]},   {"init", j["init"]}};
  return sha256_hex(subset.dump());
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"version", "seed", "run_id", "model", "source", "init", "adapt", "scenario", "output"}, "config");
    if (!j.contains("version")) throw ConfigError("config must state its version");
    read(j, "version", c.version);
    if (c.version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(c.version));
    read(j, "seed", c.seed);
    read(j, "run_id", c.run_id);
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("source")) {
      const auto& s = j["source"];
      reject_unknown(s, {"samples", "separation", "pretrain_epochs", "pretrain_lr", "pretrain_batch"}, "source");
      read(s, "samples", c.source.samples);
      read(s, "separation", c.source.separation);
      read(s, "pretrain_epochs", c.source.pretrain_epochs);
      read(s, "pretrain_lr", c.source.pretrain_lr);
      read(s, "pretrain_batch", c.source.pretrain_batch);
    }
    auto& a = c.adapt;
    if (j.contains("init")) {
      const auto& s = j["init"];
      reject_unknown(s,
                     {"mode", "epochs", "lr", "lambda_d", "lambda_m", "weight_decay", "beta1", "beta2", "batch_size",
                      "noise", "synergy", "sda_domains"},
                     "init");
      if (s.contains("mode")) a.init_mode = init_mode_from_string(s["mode"].get<std::string>());
      read(s, "epochs", a.epochs_init);
      read(s, "lr", a.lr_init);
      read(s, "lambda_d", a.lambda_d);
      read(s, "lambda_m", a.lambda_m);
      read(s, "weight_decay", a.weight_decay);
      read(s, "beta1", a.beta1);
      read(s, "beta2", a.beta2);
      read(s, "batch_size", a.batch_size);
      read(s, "noise", a.noise_init);
      if (s.contains("synergy")) a.synergy = enum_from(s["synergy"].get<std::string>(), kVariants, "synergy variant");
      if (s.contains("sda_domains")) {
        c.sda_domains.clear();
        for (const auto& d : s["sda_domains"]) c.sda_domains.push_back(domain_spec_from_json(d, c.sda_domains.size()));
      }
    }
    a.lr_tta = a.lr_init / 100.0;
    if (j.contains("adapt")) {
      const auto& s = j["adapt"];
      reject_unknown(s, {"method", "lr", "kappa", "noise", "restore_p", "freeze_routers", "tent_lr"}, "adapt");
      if (s.contains("method")) a.method = enum_from(s["method"].get<std::string>(), kMethods, "method");
      read(s, "lr", a.lr_tta);
      read(s, "kappa", a.kappa);
      read(s, "noise", a.noise_tta);
      read(s, "restore_p", a.restore_p);
      read(s, "freeze_routers", a.freeze_routers_tta);
      read(s, "tent_lr", a.tent_lr);
    }
    if (j.contains("scenario")) {
      const auto& s = j["scenario"];
      reject_unknown(s, {"kind", "rounds", "per_domain", "cgs_steps", "cgs_std", "shuffle", "domains"}, "scenario");
      if (s.contains("kind")) c.scenario.kind = enum_from(s["kind"].get<std::string>(), kKinds, "scenario kind");
      read(s, "rounds", c.scenario.rounds);
      read(s, "per_domain", c.scenario.per_domain);
      read(s, "cgs_steps", c.scenario.cgs_steps);
      read(s, "cgs_std", c.scenario.cgs_std);
      read(s, "shuffle", c.scenario.shuffle);
      if (s.contains("domains")) {
        c.scenario.domains.clear();
        for (const auto& d : s["domains"]) c.scenario.domains.push_back(domain_spec_from_json(d, c.scenario.domains.size()));
      }
    }
    if (j.contains("output")) {
      reject_unknown(j["output"], {"dir"}, "output");
      read(j["output"], "dir", c.output_dir);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ctta
