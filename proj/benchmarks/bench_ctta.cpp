// SPDX-License-Identifier: Apache-2.0
// Microbenchmarks for the routed layer, one adaptation step and synergy evaluation.
#include <benchmark/benchmark.h>

#include <vector>

#include "ctta/config.hpp"
#include "ctta/engine.hpp"
#include "ctta/harness.hpp"
#include "ctta/mode_layer.hpp"
#include "ctta/ops.hpp"
#include "ctta/synergy.hpp"

namespace {

using ctta::RngState;
using ctta::ad::Tensor;

Tensor random_tensor(RngState& rng, std::size_t rows, std::size_t cols) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& v : t.mutable_values()) v = rng.normal();
  return t;
}

ctta::MoDELayer random_layer(RngState& rng, const ctta::MoDELayerConfig& c) {
  std::vector<ctta::LowRankExpert> experts;
  std::vector<ctta::DomainRouter> routers;
  for (std::size_t i = 0; i < c.num_experts; ++i) {
    auto e = ctta::LowRankExpert::zeros(c.dim, c.rank);
    for (auto t : e.parameters())
      for (auto& v : t.mutable_values()) v = 0.1 * rng.normal();
    experts.push_back(e);
  }
  for (std::size_t d = 0; d < c.num_domains; ++d) {
    auto r = ctta::DomainRouter::zeros(c.dim, c.num_experts);
    for (auto t : r.parameters())
      for (auto& v : t.mutable_values()) v = rng.normal();
    routers.push_back(r);
  }
  return ctta::MoDELayer(c, 0, std::move(experts), std::move(routers));
}

// Args: width, batch rows.
void BM_ModeForward(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0)), batch = static_cast<std::size_t>(state.range(1));
  RngState rng(1);
  const ctta::MoDELayerConfig c{.dim = dim, .rank = 4, .num_experts = 4, .num_domains = 4, .top_k = 1};
  const auto layer = random_layer(rng, c);
  const Tensor x = random_tensor(rng, batch, dim);
  const std::vector<std::size_t> domains(batch, 2);
  RngState noise(2);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x, domains, noise, true));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ModeForward)->Args({32, 1})->Args({32, 16})->Args({128, 16})->Args({512, 16});

void BM_SynergyOfJoint(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RngState rng(3);
  const Tensor z = random_tensor(rng, 4, n);
  for (auto _ : state) {
    const Tensor j = ctta::ad::scale(ctta::ad::softmax_rows(z), 0.25);
    benchmark::DoNotOptimize(ctta::synergy_of_joint(j, ctta::SynergyVariant::mutual_information).item());
  }
}
BENCHMARK(BM_SynergyOfJoint)->Arg(4)->Arg(16)->Arg(64);

// One test-time step of the reference architecture on a single sample.
void BM_TtaStep(benchmark::State& state) {
  auto config = ctta::ExperimentConfig{};
  config.source.samples = 200;
  config.source.pretrain_epochs = 2;
  config.adapt.epochs_init = 1;
  config.scenario.per_domain = 20;
  auto init = ctta::initialize_model(config);
  ctta::Adapter adapter(init.model, config.adapt, RngState(4));
  RngState rng(5);
  const Tensor x = random_tensor(rng, static_cast<std::size_t>(state.range(0)), config.model.input_dim);
  for (auto _ : state) benchmark::DoNotOptimize(adapter.step(x).updated);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TtaStep)->Arg(1)->Arg(16)->Unit(benchmark::kMicrosecond);

void BM_ParamCount(benchmark::State& state) {
  const std::vector<std::uint64_t> dims{64, 128, 320, 512}, ranks{2, 4, 10, 16}, blocks{3, 4, 6, 3};
  for (auto _ : state) benchmark::DoNotOptimize(ctta::param_count(dims, ranks, blocks, 6, 4));
}
BENCHMARK(BM_ParamCount);

}  // namespace

BENCHMARK_MAIN();
