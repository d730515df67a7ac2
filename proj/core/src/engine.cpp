// SPDX-License-Identifier: Apache-2.0
#include "ctta/engine.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"

namespace ctta {

using ad::Tensor;

void AdaptationConfig::validate() const {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ContractError("kappa must lie in (0, 1]");
  if (!(lr_init > 0.0)) throw ContractError("lr_init must be positive");
  if (!(lr_tta >= 0.0)) throw ContractError("lr_tta must be non-negative");
  if (!(tent_lr >= 0.0)) throw ContractError("tent_lr must be non-negative");
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (!(restore_p >= 0.0 && restore_p < 1.0)) throw ContractError("restore_p must lie in [0, 1)");
  if (lambda_d < 0.0 || lambda_m < 0.0) throw ContractError("loss weights must be non-negative");
}

DataHandle::DataHandle(LabeledData data) : state_(std::make_shared<State>()) { state_->data = std::move(data); }

const LabeledData& DataHandle::get() const {
  if (state_->revoked) throw SourceAccessError("labeled initialization data is no longer accessible");
  return state_->data;
}

void DataHandle::revoke() {
  state_->revoked = true;
  state_->data = LabeledData{};
}

bool DataHandle::revoked() const { return state_->revoked; }

namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

void shuffle(std::vector<std::size_t>& v, RngState& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

double measure_synergy(const ModelAssembly& model, const LabeledData& data) {
  if (model.mode_layer_count() == 0 || data.size() == 0) return 0.0;
  ad::NoGradGuard no_grad;
  const std::size_t d_count = model.config().num_domains, n = model.config().num_experts;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  for (auto d : data.domains)
    if (d >= d_count) throw ContractError("measure_synergy: domain tag outside the router range");
  RngState unused(0);
  auto fwd = model.forward(data.rows(all), data.domains, unused, false);

  std::vector<Matrix> sums(model.mode_layer_count(), Matrix(d_count, n, 0.0));
  std::vector<std::vector<double>> counts(model.mode_layer_count(), std::vector<double>(d_count, 0.0));
  for (const auto& r : fwd.records) {
    for (std::size_t i = 0; i < n; ++i) sums[r.layer](r.domain, i) += r.gate[i];
    counts[r.layer][r.domain] += 1.0;
  }
  double total = 0.0;
  for (std::size_t l = 0; l < sums.size(); ++l) {
    Matrix joint(d_count, n, 0.0);
    for (std::size_t d = 0; d < d_count; ++d)
      for (std::size_t i = 0; i < n; ++i)
        joint(d, i) = (counts[l][d] > 0 ? sums[l](d, i) / counts[l][d] : 1.0 / static_cast<double>(n)) /
                      static_cast<double>(d_count);
    total += synergy_mi(joint);
  }
  return total / static_cast<double>(sums.size());
}

InitReport init_phase(ModelAssembly& model, const AdaptationConfig& config, DataHandle* data, RngState& rng) {
  config.validate();
  InitReport report;
  if (config.init_mode == InitMode::random) {
    model.dd().freeze();
    if (data) data->revoke();
    return report;
  }
  if (!data) throw ContractError("initialization mode needs a labeled data stream");
  const LabeledData& train = data->get();
  if (train.size() == 0) throw ContractError("initialization stream is empty");
  const bool sda = config.init_mode == InitMode::sda;

  std::vector<Tensor> params = model.mode_parameters();
  if (sda)
    for (auto& p : model.dd().parameters()) params.push_back(p);
  ad::Adam opt(params, {.lr = config.lr_init,
                        .beta1 = config.beta1,
                        .beta2 = config.beta2,
                        .weight_decay = config.weight_decay,
                        .decoupled_decay = true});

  if (sda) report.synergy.push_back(measure_synergy(model, train));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs_init; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, bs);
      std::vector<std::size_t> labels, domains;
      for (auto i : idx) {
        labels.push_back(train.labels[i]);
        if (sda) {
          domains.push_back(train.domains[i]);
        } else {
          domains.push_back(rng.uniform_index(model.config().num_domains));
        }
      }
      Tensor x = train.rows(idx);
      auto fwd = model.forward(x, domains, rng, config.noise_init);
      Tensor loss = ad::cross_entropy(fwd.logits, labels);
      if (sda) {
        loss = ad::add(loss, ad::scale(dd_loss(dd_forward(model.dd(), x), domains), config.lambda_d));
        if (config.lambda_m > 0.0 && !fwd.records.empty()) {
          loss = ad::sub(loss, ad::scale(synergy_loss_term(fwd.records, model.stats(), config.synergy), config.lambda_m));
        }
      }
      check_finite(loss.item(), "initialization loss");
      loss.backward();
      opt.step();
      opt.zero_grad();
      for (const auto& r : fwd.records) model.stats().update(r);
      total += loss.item();
      ++batches;
    }
    report.epoch_loss.push_back(total / static_cast<double>(batches));
    if (sda) report.synergy.push_back(measure_synergy(model, train));
  }
  model.dd().freeze();
  data->revoke();
  return report;
}

std::vector<std::uint8_t> entropy_filter(const Tensor& probs, double kappa) {
  const std::size_t c = probs.cols();
  if (c < 2) throw ContractError("entropy filter needs at least two classes");
  Tensor h;
  {
    ad::NoGradGuard no_grad;
    h = ad::entropy_rows(probs);
  }
  const double log_c = std::log(static_cast<double>(c));
  std::vector<std::uint8_t> keep(h.numel());
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = h[i] / log_c < kappa;
  return keep;
}

Tensor tta_loss(const Tensor& probs, double kappa) {
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ContractError("kappa must lie in (0, 1]");
  const auto keep = entropy_filter(probs, kappa);
  std::vector<double> mask(keep.begin(), keep.end());
  Tensor h = ad::entropy_rows(probs);
  return ad::mean(ad::mul(h, Tensor(h.shape(), std::move(mask))));
}

Adapter::Adapter(ModelAssembly& model, const AdaptationConfig& config, RngState rng)
    : model_(model), config_(config), rng_(rng) {
  config_.validate();
  if (config_.method == Method::tent) {
    model_.set_mode_enabled(false);
    model_.set_backbone_trainable(true);
    trainable_ = model_.backbone_parameters();
  } else {
    if (model_.mode_layer_count() == 0) throw ContractError("adapter: model has no MoDE layers");
    if (!model_.dd().frozen) throw ContractError("adapter: model is not initialized (discriminator not frozen)");
    model_.set_mode_enabled(true);
    trainable_ = model_.mode_parameters(!config_.freeze_routers_tta);
    if (config_.freeze_routers_tta) {
      for (const auto& layer : model_.mode_layers())
        if (layer)
          for (std::size_t d = 0; d < layer->routers().size(); ++d)
            for (auto p : layer->router_parameters(d)) p.set_requires_grad(false);
    }
  }
  for (const auto& t : trainable_) anchor_.push_back(t.detach());
  const double lr = config_.method == Method::tent ? config_.tent_lr : config_.lr_tta;
  optimizer_ = std::make_unique<ad::Adam>(trainable_, ad::AdamOptions{.lr = lr, .beta1 = config_.beta1, .beta2 = config_.beta2});
}

std::uint64_t Adapter::trainable_count() const {
  std::uint64_t n = 0;
  for (const auto& t : trainable_) n += t.numel();
  return n;
}

std::vector<std::size_t> Adapter::route(const Tensor& batch) {
  if (config_.method == Method::tent) return {0};
  if (config_.init_mode == InitMode::sda) return dd_predict(model_.dd(), batch);
  std::vector<std::size_t> d(batch.rows());
  for (auto& v : d) v = rng_.uniform_index(model_.config().num_domains);
  return d;
}

StepReport Adapter::step(const Tensor& batch) {
  StepReport report;
  report.pseudo_domain = route(batch);
  auto fwd = model_.forward(batch, report.pseudo_domain, rng_, config_.noise_tta);
  Tensor probs = ad::softmax_rows(fwd.logits);
  const double kappa = config_.method == Method::tent ? 1.0 : config_.kappa;
  const auto keep = entropy_filter(probs, kappa);
  for (auto k : keep) report.active_rows += k;

  Tensor loss;
  if (config_.method == Method::tent) {
    loss = ad::mean(ad::entropy_rows(probs));
  } else {
    loss = tta_loss(probs, kappa);
  }
  report.loss = loss.item();
  check_finite(report.loss, "adaptation loss");

  report.selected.resize(model_.mode_layer_count());
  std::vector<std::set<std::size_t>> sel(model_.mode_layer_count());
  for (const auto& r : fwd.records)
    for (auto e : r.selected()) sel[r.layer].insert(e);
  for (std::size_t l = 0; l < sel.size(); ++l) report.selected[l].assign(sel[l].begin(), sel[l].end());

  const bool has_signal = config_.method == Method::tent ? true : report.active_rows > 0;
  if (has_signal && loss.requires_grad()) {
    loss.backward();
    optimizer_->step();
    optimizer_->zero_grad();
    report.updated = true;
  }
  for (const auto& r : fwd.records) model_.stats().update(r);

  if (config_.restore_p > 0.0) {
    for (std::size_t i = 0; i < trainable_.size(); ++i) {
      auto w = trainable_[i].mutable_values();
      const auto a = anchor_[i].values();
      for (std::size_t k = 0; k < w.size(); ++k)
        if (rng_.bernoulli(config_.restore_p)) w[k] = a[k];
    }
  }
  return report;
}

std::vector<double> evaluate(const ModelAssembly& model, const LabeledData& eval, std::size_t num_domains,
                             const AdaptationConfig& config, RngState rng) {
  if (num_domains == 0) throw ContractError("evaluate: no domains");
  std::vector<double> acc(num_domains, 0.0);
  ad::NoGradGuard no_grad;
  for (std::size_t j = 0; j < num_domains; ++j) {
    const auto idx = eval.indices_of(j);
    if (idx.empty()) throw ContractError("evaluate: domain " + std::to_string(j) + " has no samples");
    Tensor x = eval.rows(idx);
    std::vector<std::size_t> routes;
    if (!model.mode_enabled() || model.mode_layer_count() == 0) {
      routes = {0};
    } else if (config.init_mode == InitMode::sda) {
      routes = dd_predict(model.dd(), x);
    } else {
      routes.resize(idx.size());
      for (auto& r : routes) r = rng.uniform_index(model.config().num_domains);
    }
    auto fwd = model.forward(x, routes, rng, false);
    const auto pred = ad::argmax_rows(fwd.logits);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) hits += pred[k] == eval.labels[idx[k]];
    acc[j] = static_cast<double>(hits) / static_cast<double>(idx.size());
  }
  return acc;
}

namespace {

double evaluate_one(const ModelAssembly& model, const LabeledData& eval, std::size_t domain,
                    const AdaptationConfig& config, RngState rng) {
  LabeledData subset;
  subset.dim = eval.dim;
  for (auto i : eval.indices_of(domain)) subset.append(eval.sample(i), eval.labels[i], 0);
  return evaluate(model, subset, 1, config, rng)[0];
}

}  // namespace

RoundMetrics run_ctta(ModelAssembly& model, const Scenario& scenario, const AdaptationConfig& config, RngState rng) {
  const auto& st = scenario.stream;
  if (st.rounds < 1) throw ContractError("run_ctta: at least one round required");
  if (st.round_length == 0 || st.task_length == 0 || st.round_length % st.task_length != 0) {
    throw ContractError("run_ctta: round must split into whole task windows");
  }
  if (st.records.size() != st.rounds * st.round_length) throw ContractError("run_ctta: stream length mismatch");
  const std::size_t num_domains = scenario.domain_names.size();
  const std::size_t tasks = st.round_length / st.task_length;
  if (st.task_domains.size() != tasks) throw ContractError("run_ctta: one nominal domain per task required");

  std::vector<Matrix> selections_before;
  for (std::size_t l = 0; l < model.mode_layer_count(); ++l) selections_before.push_back(model.stats().selections(l));

  Adapter adapter(model, config, rng.split(1));
  const RngState eval_rng = rng.split(2);
  UnlabeledView view(st);

  RoundMetrics m;
  m.accuracy = Matrix(st.rounds, num_domains);
  m.first_pass.assign(num_domains, 0.0);
  m.domain_names = scenario.domain_names;
  m.param_count = adapter.trainable_count();

  std::size_t pos = 0;
  for (std::size_t k = 0; k < st.rounds; ++k) {
    for (std::size_t task = 0; task < tasks; ++task) {
      const std::size_t end = pos + st.task_length;
      while (pos < end) {
        const std::size_t bs = std::min(config.batch_size, end - pos);
        adapter.step(view.batch(pos, bs));
        pos += bs;
      }
      if (k == 0) {
        const std::size_t j = st.task_domains[task];
        m.first_pass[j] = evaluate_one(model, scenario.eval, j, config, eval_rng.split(1'000'000 + j));
      }
    }
    const auto acc = evaluate(model, scenario.eval, num_domains, config, eval_rng.split(k));
    for (std::size_t j = 0; j < num_domains; ++j) m.accuracy(k, j) = acc[j];
  }

  for (std::size_t l = 0; l < model.mode_layer_count(); ++l) {
    Matrix diff = model.stats().selections(l);
    for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= selections_before[l].data[i];
    const Matrix snap[1] = {diff};
    m.expert_freq.push_back(expert_frequency(snap));
  }
  return m;
}

}  // namespace ctta
