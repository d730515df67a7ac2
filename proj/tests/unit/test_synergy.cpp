// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"
#include "ctta/optim.hpp"
#include "ctta/synergy.hpp"
#include "generators.hpp"
#include "gradcheck.hpp"

using namespace ctta;
using ad::Tensor;

namespace {

GateRecord record(std::size_t layer, std::size_t domain, std::vector<double> gate) {
  GateRecord r;
  r.layer = layer;
  r.domain = domain;
  r.gates = Tensor({1, gate.size()}, gate);
  r.gate = std::move(gate);
  return r;
}

// KL(joint || outer product of marginals), written out independently.
double mi_oracle(const Matrix& j) {
  double mi = 0.0;
  for (std::size_t d = 0; d < j.rows; ++d) {
    double pd = 0.0;
    for (std::size_t i = 0; i < j.cols; ++i) pd += j(d, i);
    for (std::size_t i = 0; i < j.cols; ++i) {
      double pa = 0.0;
      for (std::size_t e = 0; e < j.rows; ++e) pa += j(e, i);
      if (j(d, i) > 0.0) mi += j(d, i) * (std::log(j(d, i)) - std::log(pd) - std::log(pa));
    }
  }
  return mi;
}

Matrix outer(const std::vector<double>& pd, const std::vector<double>& pa) {
  Matrix m(pd.size(), pa.size());
  for (std::size_t d = 0; d < pd.size(); ++d)
    for (std::size_t i = 0; i < pa.size(); ++i) m(d, i) = pd[d] * pa[i];
  return m;
}

std::vector<double> random_simplex(RngState& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) s += x = rng.uniform();
  for (auto& x : v) x /= s;
  return v;
}

Matrix joint_of(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  std::copy(t.values().begin(), t.values().end(), m.data.begin());
  return m;
}

}  // namespace

TEST(UpdateStats, ZeroBetaReplacesRow) {
  DomainAssignmentStats s(1, 2, 3, 0.0);
  update_stats(s, record(0, 1, {0.2, 0.8, 0.0}));
  EXPECT_EQ(s.table(0)(1, 0), 0.2);
  EXPECT_EQ(s.table(0)(1, 1), 0.8);
  EXPECT_EQ(s.table(0)(1, 2), 0.0);
  EXPECT_DOUBLE_EQ(s.table(0)(0, 0), 1.0 / 3.0);
  EXPECT_EQ(s.count(0, 1), 1u);
  EXPECT_EQ(s.selections(0)(1, 2), 0.0);
  EXPECT_EQ(s.selections(0)(1, 1), 1.0);
}

TEST(UpdateStats, RepeatedRecordIsFixedPoint) {
  DomainAssignmentStats s(1, 1, 2, 0.7);
  const std::vector<double> g{0.25, 0.75};
  update_stats(s, record(0, 0, g));
  // Start the row at g, then one more identical update must leave it there.
  s.mutable_table(0)(0, 0) = g[0];
  s.mutable_table(0)(0, 1) = g[1];
  update_stats(s, record(0, 0, g));
  EXPECT_DOUBLE_EQ(s.table(0)(0, 0), g[0]);
  EXPECT_DOUBLE_EQ(s.table(0)(0, 1), g[1]);
}

TEST(UpdateStats, UnrolledRecurrence) {
  DomainAssignmentStats s(1, 1, 4, 0.5);
  const std::vector<double> g1{1, 0, 0, 0}, g2{0, 0.5, 0.5, 0};
  update_stats(s, record(0, 0, g1));
  update_stats(s, record(0, 0, g2));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s.table(0)(0, i), 0.5 * (0.5 * 0.25 + 0.5 * g1[i]) + 0.5 * g2[i]);
}

TEST(UpdateStats, RowsStayOnTheSimplex) {
  RngState rng(1);
  DomainAssignmentStats s(2, 3, 4, 0.9);
  for (int i = 0; i < 500; ++i) update_stats(s, record(rng.uniform_index(2), rng.uniform_index(3), random_simplex(rng, 4)));
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t d = 0; d < 3; ++d) {
      double sum = 0.0;
      for (double v : s.table(l).row(d)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(UpdateStats, RejectsInvalidRecords) {
  DomainAssignmentStats s(1, 2, 2);
  EXPECT_THROW(s.update(record(1, 0, {0.5, 0.5})), ContractError);
  EXPECT_THROW(s.update(record(0, 2, {0.5, 0.5})), ContractError);
  EXPECT_THROW(s.update(record(0, 0, {0.5, 0.6})), ContractError);
  EXPECT_THROW(s.update(record(0, 0, {1.5, -0.5})), ContractError);
  EXPECT_THROW(DomainAssignmentStats(1, 2, 2, 1.0), ContractError);
}

TEST(JointDistribution, UniformRows) {
  DomainAssignmentStats s(1, 2, 4);
  for (double v : joint_distribution(s, 0).data) EXPECT_DOUBLE_EQ(v, 1.0 / 8.0);
}

TEST(JointDistribution, OneHotRows) {
  DomainAssignmentStats s(1, 2, 2, 0.0);
  s.update(record(0, 0, {1, 0}));
  s.update(record(0, 1, {0, 1}));
  const Matrix j = joint_distribution(s, 0);
  EXPECT_EQ(j.data, (std::vector<double>{0.5, 0, 0, 0.5}));
}

TEST(JointDistribution, SumsToOne) {
  RngState rng(2);
  DomainAssignmentStats s(1, 3, 5, 0.0);
  for (std::size_t d = 0; d < 3; ++d) s.update(record(0, d, random_simplex(rng, 5)));
  double sum = 0.0;
  for (double v : joint_distribution(s, 0).data) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(SynergyMi, IndependentJointIsZero) {
  RngState rng(3);
  EXPECT_NEAR(synergy_mi(outer(random_simplex(rng, 3), random_simplex(rng, 5))), 0.0, 1e-12);
}

TEST(SynergyMi, BijectionIsLn2) {
  Matrix j(2, 2);
  j.data = {0.5, 0, 0, 0.5};
  EXPECT_NEAR(synergy_mi(j), std::log(2.0), 1e-15);
}

TEST(SynergyMi, MatchesDoubleSumOracle) {
  Matrix j(2, 3);
  j.data = {0.3, 0.1, 0.1, 0.05, 0.25, 0.2};
  EXPECT_NEAR(synergy_mi(j), mi_oracle(j), 1e-14);
}

TEST(SynergyMi, BoundsOnRandomJoints) {
  RngState rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = testkit::between(rng, 1, 6), n = testkit::between(rng, 1, 6);
    const Matrix j = testkit::random_joint(rng, d, n, 0.2);
    const double mi = synergy_mi(j);
    ASSERT_GE(mi, -1e-12);
    ASSERT_LE(mi, std::log(static_cast<double>(std::min(d, n))) + 1e-12);
    ASSERT_NEAR(mi, mi_oracle(j), 1e-10);
  }
}

TEST(SynergyMi, InvariantUnderExpertPermutation) {
  RngState rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix j = testkit::random_joint(rng, 3, 5);
    const auto perm = testkit::random_permutation(rng, 5);
    Matrix p(3, 5);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t i = 0; i < 5; ++i) p(d, i) = j(d, perm[i]);
    EXPECT_NEAR(synergy_mi(j), synergy_mi(p), 1e-12);
  }
}

TEST(SynergyMi, ZeroOnlyForProductJoints) {
  Matrix dependent(2, 2);
  dependent.data = {0.3, 0.2, 0.2, 0.3};
  EXPECT_GT(synergy_mi(dependent), 1e-3);
  Matrix product = outer({0.4, 0.6}, {0.5, 0.5});
  EXPECT_NEAR(synergy_mi(product), 0.0, 1e-15);
}

TEST(SynergyMi, RejectsInvalidJoints) {
  Matrix bad(1, 2);
  bad.data = {1.2, -0.2};
  EXPECT_THROW(synergy_mi(bad), DomainError);
  bad.data = {0.2, 0.2};
  EXPECT_THROW(synergy_mi(bad), ContractError);
}

TEST(SynergyNegentropy, ReferenceValues) {
  Matrix uniform(2, 3, 1.0 / 6.0);
  EXPECT_NEAR(synergy_negentropy(uniform), -std::log(6.0), 1e-15);
  Matrix one_hot(2, 3, 0.0);
  one_hot(1, 2) = 1.0;
  EXPECT_EQ(synergy_negentropy(one_hot), 0.0);
  Matrix j(2, 3);
  j.data = {0.3, 0.1, 0.1, 0.05, 0.25, 0.2};
  double oracle = 0.0;
  for (double p : j.data) oracle += p * std::log(p);
  EXPECT_NEAR(synergy_negentropy(j), oracle, 1e-15);
}

TEST(SynergyOfJoint, AgreesWithMatrixRoutes) {
  RngState rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix j = testkit::random_joint(rng, testkit::between(rng, 1, 5), testkit::between(rng, 1, 5), 0.2);
    Tensor t({j.rows, j.cols}, j.data);
    EXPECT_NEAR(synergy_of_joint(t, SynergyVariant::mutual_information).item(), synergy_mi(j), 1e-12);
    EXPECT_NEAR(synergy_of_joint(t, SynergyVariant::negative_entropy).item(), synergy_negentropy(j), 1e-12);
  }
}

TEST(SynergyLossTerm, BijectionGivesLnD) {
  const std::size_t d_count = 4;
  DomainAssignmentStats s(1, d_count, d_count, 0.0);
  for (std::size_t d = 0; d < d_count; ++d) {
    std::vector<double> g(d_count, 0.0);
    g[(d + 1) % d_count] = 1.0;
    s.update(record(0, d, g));
  }
  const GateRecord current[1] = {record(0, 2, {0, 0, 0, 1})};
  EXPECT_NEAR(synergy_loss_term(current, s).item(), std::log(4.0), 1e-10);
}

TEST(SynergyLossTerm, NegentropyVariantDelegates) {
  RngState rng(7);
  DomainAssignmentStats s(1, 3, 4, 0.0);
  for (std::size_t d = 0; d < 3; ++d) s.update(record(0, d, random_simplex(rng, 4)));
  const auto g = random_simplex(rng, 4);
  const GateRecord current[1] = {record(0, 1, g)};
  Matrix joint = joint_distribution(s, 0);
  for (std::size_t i = 0; i < 4; ++i) joint(1, i) = g[i] / 3.0;
  EXPECT_NEAR(synergy_loss_term(current, s, SynergyVariant::negative_entropy).item(), synergy_negentropy(joint), 1e-14);
  EXPECT_NEAR(synergy_loss_term(current, s).item(), synergy_mi(joint), 1e-14);
}

TEST(SynergyLossTerm, RowsOfOneDomainAreAveraged) {
  DomainAssignmentStats s(1, 2, 2, 0.0);
  const GateRecord current[2] = {record(0, 0, {1, 0}), record(0, 0, {0.5, 0.5})};
  Matrix joint(2, 2);
  joint.data = {0.75 / 2, 0.25 / 2, 0.25, 0.25};
  EXPECT_NEAR(synergy_loss_term(current, s).item(), synergy_mi(joint), 1e-15);
}

TEST(SynergyLossTerm, GradientMatchesFiniteDifferences) {
  RngState rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d_count = testkit::between(rng, 2, 4), n = testkit::between(rng, 2, 5), b = testkit::between(rng, 1, 3);
    DomainAssignmentStats s(2, d_count, n, 0.0);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t d = 0; d < d_count; ++d) s.update(record(l, d, random_simplex(rng, n)));
    std::vector<std::size_t> domains(b), layers(b);
    for (std::size_t r = 0; r < b; ++r) {
      domains[r] = rng.uniform_index(d_count);
      layers[r] = rng.uniform_index(2);
    }
    auto f = [&](std::span<const Tensor> x) {
      Tensor gates = ad::softmax_rows(x[0]);
      std::vector<GateRecord> recs;
      for (std::size_t r = 0; r < b; ++r) {
        GateRecord rec;
        rec.layer = layers[r];
        rec.domain = domains[r];
        rec.gates = gates;
        rec.row = r;
        recs.push_back(rec);
      }
      return synergy_loss_term(recs, s);
    };
    const auto res = testkit::gradcheck(f, {testkit::random_tensor(rng, {b, n}, -2, 2)});
    ASSERT_LT(res.max_rel_error, 1e-4) << "trial " << trial;
  }
}

TEST(SynergyLossTerm, RejectsEmptyOrForeignRecords) {
  DomainAssignmentStats s(1, 2, 2);
  EXPECT_THROW(synergy_loss_term({}, s), ContractError);
  const GateRecord foreign[1] = {record(3, 0, {1, 0})};
  EXPECT_THROW(synergy_loss_term(foreign, s), ContractError);
}

TEST(SynergyAscent, FreeRoutingTableSharpens) {
  for (auto variant : {SynergyVariant::mutual_information, SynergyVariant::negative_entropy}) {
    RngState rng(9);
    const std::size_t d_count = 4, n = 4;
    Tensor z = testkit::random_tensor(rng, {d_count, n}, -0.1, 0.1);
    z.set_requires_grad(true);
    ad::Adam opt({z}, {.lr = 0.05});
    for (int step = 0; step < 2000; ++step) {
      Tensor joint = ad::scale(ad::softmax_rows(z), 1.0 / d_count);
      ad::scale(synergy_of_joint(joint, variant), -1.0).backward();
      opt.step();
      opt.zero_grad();
    }
    Tensor p = ad::softmax_rows(z);
    for (std::size_t d = 0; d < d_count; ++d) {
      double mx = 0.0;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, p.at(d, i));
      EXPECT_GE(mx, 0.99) << "row " << d;
    }
    if (variant == SynergyVariant::mutual_information) {
      // A maximizer of I(D;A) with N = D sends each domain to its own expert.
      const auto arg = ad::argmax_rows(p);
      std::vector<std::size_t> sorted(arg);
      std::sort(sorted.begin(), sorted.end());
      EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
      EXPECT_NEAR(synergy_mi(joint_of(ad::scale(p, 1.0 / d_count))), std::log(4.0), 0.05);
    }
  }
}

TEST(SynergyAscent, BothVariantsPeakOnPermutationJoints) {
  RngState rng(10);
  const std::size_t n = 3;
  const auto perm = testkit::random_permutation(rng, n);
  Matrix best(n, n, 0.0);
  for (std::size_t d = 0; d < n; ++d) best(d, perm[d]) = 1.0 / n;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix other = testkit::random_joint(rng, n, n);
    for (std::size_t d = 0; d < n; ++d) {  // uniform domain marginal, as in the loss
      double row = 0.0;
      for (std::size_t i = 0; i < n; ++i) row += other(d, i);
      for (std::size_t i = 0; i < n; ++i) other(d, i) /= row * n;
    }
    EXPECT_GE(synergy_mi(best) + 1e-12, synergy_mi(other));
    EXPECT_GE(synergy_negentropy(best) + 1e-12, synergy_negentropy(other));
  }
}
