// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "ctta/metrics.hpp"
#include "ctta/model.hpp"
#include "ctta/optim.hpp"
#include "ctta/rng.hpp"
#include "ctta/scenario.hpp"
#include "ctta/synergy.hpp"

namespace ctta {

enum class InitMode { random, source_only, sda };
/// mode: adapt MoDE layers with the filtered entropy loss. tent: the full-update
/// entropy baseline, adapting every backbone weight with no filter and no MoDE.
enum class Method { mode, tent };

struct AdaptationConfig {
  InitMode init_mode = InitMode::sda;
  double lambda_d = 0.1;
  double lambda_m = 0.0005;
  double kappa = 0.4;
  double lr_init = 6e-5;
  double lr_tta = 6e-7;
  std::size_t epochs_init = 10;
  std::size_t batch_size = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;  // AdamW, initialization only
  bool noise_init = true;
  bool noise_tta = true;
  double restore_p = 0.0;
  SynergyVariant synergy = SynergyVariant::mutual_information;
  bool freeze_routers_tta = false;
  Method method = Method::mode;
  double tent_lr = 1e-3;

  void validate() const;
};

/// Labeled data that can be handed out until revoked. Copies share the
/// revocation, so every holder loses access at once.
class DataHandle {
 public:
  explicit DataHandle(LabeledData data);
  const LabeledData& get() const;
  void revoke();
  bool revoked() const;

 private:
  struct State {
    LabeledData data;
    bool revoked = false;
  };
  std::shared_ptr<State> state_;
};

struct InitReport {
  std::vector<double> epoch_loss;
  /// Layer-averaged mutual information of the noiseless routing on the
  /// initialization data, before training (index 0) and after each epoch.
  std::vector<double> synergy;
};

/// Initialization phase. sda trains MoDE and discriminator on augmented data
/// with task CE + lambda_d * DD CE - lambda_m * synergy; source_only trains MoDE
/// on source data with task CE; random leaves the identity-initialized layers.
/// The discriminator is frozen and `data` revoked on return.
InitReport init_phase(ModelAssembly& model, const AdaptationConfig& config, DataHandle* data, RngState& rng);

/// Mean synergy over layers of the empirical joint of noiseless gates on `data`,
/// routing each sample through the router of its domain tag.
double measure_synergy(const ModelAssembly& model, const LabeledData& data);

/// 1 where entropy / ln C < kappa.
std::vector<std::uint8_t> entropy_filter(const ad::Tensor& probs, double kappa);
/// Mean over rows of 1{H/ln C < kappa} * H; filtered rows carry no value and no gradient.
ad::Tensor tta_loss(const ad::Tensor& probs, double kappa);

struct StepReport {
  double loss = 0.0;
  std::vector<std::size_t> pseudo_domain;
  /// Per MoDE layer, experts with nonzero gate on some row.
  std::vector<std::vector<std::size_t>> selected;
  std::size_t active_rows = 0;
  bool updated = false;
};

/// Online source-free adaptation of one model.
class Adapter {
 public:
  Adapter(ModelAssembly& model, const AdaptationConfig& config, RngState rng);

  StepReport step(const ad::Tensor& batch);
  std::vector<std::size_t> route(const ad::Tensor& batch);

  const std::vector<ad::Tensor>& trainable() const { return trainable_; }
  std::uint64_t trainable_count() const;
  const RngState& rng() const { return rng_; }

 private:
  ModelAssembly& model_;
  AdaptationConfig config_;
  std::vector<ad::Tensor> trainable_;
  std::vector<ad::Tensor> anchor_;
  std::unique_ptr<ad::Adam> optimizer_;
  RngState rng_;
};

/// Per-domain accuracy (noise off, no updates). Routing uses the discriminator
/// after sda initialization and otherwise uniform router draws from `rng`.
std::vector<double> evaluate(const ModelAssembly& model, const LabeledData& eval, std::size_t num_domains,
                             const AdaptationConfig& config, RngState rng);

/// Every round streams the adaptation records through the adapter, then
/// evaluates all domains. During round 1 each domain is also evaluated right
/// after its task window (first-pass accuracy).
RoundMetrics run_ctta(ModelAssembly& model, const Scenario& scenario, const AdaptationConfig& config, RngState rng);

}  // namespace ctta
