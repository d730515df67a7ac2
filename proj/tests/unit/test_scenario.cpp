// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "ctta/errors.hpp"
#include "ctta/scenario.hpp"
#include "generators.hpp"

using namespace ctta;

namespace {

std::vector<DomainSpec> targets() { return default_target_specs(); }

template <typename V>
concept ExposesLabels = requires(const V& v) { v.label(0); } || requires(const V& v) { v.labels(); };

static_assert(!ExposesLabels<UnlabeledView>, "the adaptation view must not expose labels");

}  // namespace

TEST(Source, DeterministicInSeed) {
  const auto a = make_source(4, 120, 10, 16);
  const auto b = make_source(4, 120, 10, 16);
  const auto c = make_source(5, 120, 10, 16);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(Source, BalancedRoundRobinLabels) {
  const auto d = make_source(1, 100, 10, 8);
  std::vector<std::size_t> counts(10, 0);
  for (auto l : d.labels) ++counts[l];
  for (auto n : counts) EXPECT_EQ(n, 10u);
  for (auto dom : d.domains) EXPECT_EQ(dom, 0u);
}

TEST(Source, ClassMeansHaveRequestedNorm) {
  SourceGenerator gen(9, 6, 20, 5.0);
  for (std::size_t c = 0; c < 6; ++c) {
    double n = 0.0;
    for (double v : gen.mean(c)) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 5.0, 1e-12);
  }
}

TEST(Source, NearestMeanProbeSeparatesClasses) {
  // Oracle: classify by the closest class mean; unit-variance clusters at
  // separation 5 in 32 dimensions are almost perfectly separable.
  SourceGenerator gen(2, 10, 32);
  RngState rng(77);
  const auto d = gen.sample(2000, rng);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < 10; ++c) {
      double s = 0.0;
      auto x = d.sample(i);
      auto m = gen.mean(c);
      for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - m[j]) * (x[j] - m[j]);
      if (s < best_d) best_d = s, best = c;
    }
    hits += best == d.labels[i];
  }
  EXPECT_GE(static_cast<double>(hits) / static_cast<double>(d.size()), 0.99);
}

TEST(Source, RejectsDegenerateShapes) {
  EXPECT_THROW(make_source(1, 5, 10, 4), ContractError);
  EXPECT_THROW(SourceGenerator(1, 1, 4), ContractError);
  EXPECT_THROW(SourceGenerator(1, 3, 0), ContractError);
}

TEST(DomainTransform, GainOffsetExample) {
  DomainSpec s{1, "g", {}};
  s.transform.gain = 2.0;
  s.transform.offset = -1.0;
  const std::vector<double> x{1.0, 0.5, -3.0};
  EXPECT_EQ(apply_domain(s, x, 0), (std::vector<double>{1.0, 0.0, -7.0}));
}

TEST(DomainTransform, BlurIsCircularBoxAverage) {
  DomainSpec s{1, "b", {}};
  s.transform.blur = 1;
  const std::vector<double> x{3.0, 0.0, 0.0, 6.0};
  const auto y = apply_domain(s, x, 0);
  const std::vector<double> want{3.0, 1.0, 2.0, 3.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], want[i], 1e-15);
}

TEST(DomainTransform, RotationPreservesNormAndNoiseIsKeyed) {
  DomainSpec s{2, "r", {}};
  s.transform.rotation = 0.7;
  RngState rng(3);
  const auto t = testkit::random_tensor(rng, {1, 10});
  const std::vector<double> x(t.values().begin(), t.values().end());
  const auto y = apply_domain(s, x, 0);
  double nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) nx += x[i] * x[i], ny += y[i] * y[i];
  EXPECT_NEAR(nx, ny, 1e-12);

  s.transform.noise = 0.5;
  EXPECT_EQ(apply_domain(s, x, 4), apply_domain(s, x, 4));
  EXPECT_NE(apply_domain(s, x, 4), apply_domain(s, x, 5));
}

TEST(Sda, OneCopyPerSpecWithIdentityFirst) {
  const auto src = make_source(3, 40, 4, 8);
  const auto specs = default_sda_specs();
  const auto sda = make_sda(src, specs);
  ASSERT_EQ(sda.size(), 40u * specs.size());
  for (std::size_t d = 0; d < specs.size(); ++d) {
    const auto idx = sda.indices_of(d);
    ASSERT_EQ(idx.size(), 40u);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      EXPECT_EQ(sda.labels[idx[k]], src.labels[k]);
      const auto want = apply_domain(specs[d], src.sample(k), k);
      const auto got = sda.sample(idx[k]);
      EXPECT_TRUE(std::equal(want.begin(), want.end(), got.begin()));
    }
  }
  const auto first = sda.indices_of(0);
  for (std::size_t k = 0; k < first.size(); ++k) {
    const auto a = sda.sample(first[k]);
    const auto b = src.sample(k);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Sda, RejectsNonIdentityFirstSpec) {
  const auto src = make_source(3, 20, 4, 8);
  auto specs = default_sda_specs();
  std::swap(specs[0], specs[1]);
  EXPECT_THROW(make_sda(src, specs), ContractError);
}

TEST(Cds, BlocksTileEveryRound) {
  SourceGenerator gen(5, 4, 8);
  const auto specs = targets();
  const auto sc = make_cds(gen, specs, 30, 3, 99);
  const auto& st = sc.stream;
  ASSERT_EQ(st.records.size(), 3u * 4u * 30u);
  EXPECT_EQ(st.round_length, 120u);
  EXPECT_EQ(st.task_length, 30u);
  for (std::size_t i = 0; i < st.records.size(); ++i) {
    EXPECT_EQ(st.records[i].t, i + 1);
    EXPECT_EQ(st.records[i].domain, (i % 120) / 30);
    EXPECT_FALSE(st.records[i].label.has_value());
  }
  // Every round replays the same samples.
  for (std::size_t i = 0; i < 120; ++i) {
    EXPECT_EQ(st.records[i].x, st.records[i + 120].x);
    EXPECT_EQ(st.records[i].x, st.records[i + 240].x);
  }
  EXPECT_EQ(sc.eval.size(), 120u);
  EXPECT_EQ(sc.domain_names.size(), 4u);
}

TEST(Cds, ShuffleKeepsBlockContents) {
  SourceGenerator gen(5, 4, 8);
  const auto specs = targets();
  const auto plain = make_cds(gen, specs, 25, 1, 7, false);
  const auto mixed = make_cds(gen, specs, 25, 1, 7, true);
  EXPECT_NE(plain.stream.records, mixed.stream.records);
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<std::vector<double>> a, b;
    for (std::size_t i = 0; i < 25; ++i) {
      a.push_back(plain.stream.records[j * 25 + i].x);
      b.push_back(mixed.stream.records[j * 25 + i].x);
      EXPECT_EQ(mixed.stream.records[j * 25 + i].domain, j);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Cds, EvalMirrorsStreamSamples) {
  SourceGenerator gen(6, 4, 8);
  const auto sc = make_cds(gen, targets(), 20, 1, 3);
  for (std::size_t i = 0; i < 80; ++i) {
    const auto e = sc.eval.sample(i);
    EXPECT_TRUE(std::equal(e.begin(), e.end(), sc.stream.records[i].x.begin()));
    EXPECT_EQ(sc.eval.domains[i], sc.stream.records[i].domain);
  }
}

TEST(Cgs, RawMeansNearScheduleCentresOverSeeds) {
  const std::size_t T = 1600, D = 4;
  std::vector<double> sum(D, 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = cgs_schedule(D, T, 200.0, seed);
    for (std::size_t i = 0; i < D; ++i) {
      ASSERT_EQ(s.raw_positions[i].size(), T / D);
      sum[i] += std::accumulate(s.raw_positions[i].begin(), s.raw_positions[i].end(), 0.0) /
                static_cast<double>(T / D);
    }
  }
  for (std::size_t i = 0; i < D; ++i) EXPECT_NEAR(sum[i] / 20.0, 400.0 * static_cast<double>(i + 1), 30.0);
}

TEST(Cgs, ExactCountsAndEachDrawOnce) {
  const auto s = cgs_schedule(4, 1600, 200.0, 8);
  ASSERT_EQ(s.domain_sequence.size(), 1600u);
  std::vector<std::vector<int>> seen(4, std::vector<int>(400, 0));
  for (std::size_t t = 0; t < 1600; ++t) ++seen[s.domain_sequence[t]][s.draw_index[t]];
  for (const auto& d : seen)
    for (int n : d) EXPECT_EQ(n, 1);
}

TEST(Cgs, ZeroSpreadDegeneratesToDisjointOrder) {
  const auto s = cgs_schedule(4, 1600, 0.0, 8);
  for (std::size_t t = 0; t < 1600; ++t) {
    EXPECT_EQ(s.domain_sequence[t], t / 400);
    EXPECT_EQ(s.draw_index[t], t % 400);
  }
  SourceGenerator gen(1, 4, 8);
  const auto specs = targets();
  const auto g = make_cgs(gen, specs, 160, 0.0, 4, 2);
  const auto c = make_cds(gen, specs, 40, 2, 4);
  EXPECT_EQ(g.stream.records, c.stream.records);
}

TEST(Cgs, RejectsIndivisibleLength) {
  EXPECT_THROW(cgs_schedule(3, 1600, 200.0, 1), ContractError);
  EXPECT_THROW(cgs_schedule(4, 1600, -1.0, 1), ContractError);
}

TEST(Stream, RoundTripsThroughText) {
  SourceGenerator gen(2, 4, 6);
  const auto sc = make_cgs(gen, targets(), 40, 5.0, 3, 2);
  std::stringstream buf;
  write_stream(buf, sc.stream);
  EXPECT_EQ(read_stream(buf), sc.stream);

  std::stringstream labeled;
  const auto st = to_stream(make_source(1, 12, 3, 4), Phase::sda);
  write_stream(labeled, st);
  const auto back = read_stream(labeled);
  EXPECT_EQ(back, st);
  EXPECT_TRUE(back.records[0].label.has_value());
}

TEST(Stream, MalformedInputIsDataError) {
  std::stringstream empty;
  EXPECT_THROW(read_stream(empty), DataError);
  std::stringstream garbage("not json\n");
  EXPECT_THROW(read_stream(garbage), DataError);

  const auto st = to_stream(make_source(1, 4, 2, 3), Phase::sda);
  std::stringstream ok;
  write_stream(ok, st);
  std::string text = ok.str();
  std::stringstream wrong_width(text.substr(0, text.find('\n') + 1) + R"({"t":1,"domain":0,"label":0,"x":[1,2]})" + "\n");
  EXPECT_THROW(read_stream(wrong_width), DataError);
  std::stringstream backwards(text.substr(0, text.find('\n') + 1) + R"({"t":2,"domain":0,"label":0,"x":[1,2,3]})" +
                              "\n" + R"({"t":2,"domain":0,"label":0,"x":[1,2,3]})" + "\n");
  EXPECT_THROW(read_stream(backwards), DataError);
  EXPECT_THROW(phase_from_string("train"), DataError);
}

TEST(UnlabeledView, BatchesFeaturesInOrder) {
  SourceGenerator gen(2, 4, 5);
  const auto sc = make_cds(gen, targets(), 10, 1, 1);
  UnlabeledView view(sc.stream);
  ASSERT_EQ(view.size(), 40u);
  const auto b = view.batch(3, 4);
  EXPECT_EQ(b.rows(), 4u);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(view.timestep(3 + r), 4 + r);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(b.values()[r * 5 + j], sc.stream.records[3 + r].x[j]);
  }
}
