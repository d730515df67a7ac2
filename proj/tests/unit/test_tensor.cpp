// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "ctta/errors.hpp"
#include "ctta/ops.hpp"
#include "ctta/rng.hpp"
#include "ctta/tensor.hpp"

using namespace ctta;
using ad::Tensor;

TEST(Tensor, ShapeAndValuesAgree) {
  Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
}

TEST(Tensor, BackwardOfSumIsOnes) {
  Tensor w = Tensor::vector({0.3, -1.0, 2.0}, true);
  ad::sum(w).backward();
  ASSERT_TRUE(w.has_grad());
  for (double g : w.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Tensor, BackwardOfSquareIsTwiceW) {
  Tensor w = Tensor::vector({1.0, 2.0}, true);
  ad::sum(ad::mul(w, w)).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 4.0);
}

TEST(Tensor, DetachedTensorGetsNoGrad) {
  Tensor w = Tensor::vector({1.0, 2.0}, true);
  Tensor d = w.detach();
  ad::sum(ad::mul(d, w)).backward();
  EXPECT_FALSE(d.has_grad());
  EXPECT_FALSE(d.requires_grad());
  ASSERT_TRUE(w.has_grad());
  EXPECT_DOUBLE_EQ(w.grad()[1], 2.0);
}

TEST(Tensor, SharedSubexpressionAccumulates) {
  // y = s * s + 3 s with s = sum(w * w); compare with the unrolled derivative.
  Tensor w = Tensor::vector({0.5, -1.5, 2.0}, true);
  Tensor s = ad::sum(ad::mul(w, w));
  Tensor y = ad::add(ad::mul(s, s), ad::scale(s, 3.0));
  y.backward();
  const double sv = 0.25 + 2.25 + 4.0;
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w.grad()[i], (2.0 * sv + 3.0) * 2.0 * w[i], 1e-12);
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
  Tensor w = Tensor::vector({1.0}, true);
  ad::sum(w).backward();
  ad::sum(w).backward();
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
  w.zero_grad();
  EXPECT_FALSE(w.has_grad());
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Tensor w = Tensor::vector({1.0, 2.0}, true);
  Tensor y;
  {
    ad::NoGradGuard guard;
    EXPECT_FALSE(ad::grad_enabled());
    y = ad::sum(ad::mul(w, w));
  }
  EXPECT_TRUE(ad::grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(Tensor, BackwardRequiresScalar) {
  Tensor w = Tensor::vector({1.0, 2.0}, true);
  EXPECT_THROW(ad::mul(w, w).backward(), ContractError);
}

TEST(Tensor, RequiresGradOnlyChangesOnLeaves) {
  Tensor w = Tensor::vector({1.0}, true);
  Tensor y = ad::scale(w, 2.0);
  EXPECT_THROW(y.set_requires_grad(false), ContractError);
}

TEST(Tensor, CloneIsIndependent) {
  Tensor w = Tensor::vector({1.0, 2.0}, true);
  Tensor c = w.clone();
  c.mutable_values()[0] = 9.0;
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_TRUE(c.requires_grad());
  EXPECT_FALSE(c.same_node(w));
}

TEST(Tensor, GradientsAreFiniteAfterBackward) {
  RngState rng(5);
  Tensor x = Tensor::zeros({4, 3}, true);
  for (auto& v : x.mutable_values()) v = 30.0 * rng.normal();
  ad::sum(ad::entropy_rows(ad::softmax_rows(x))).backward();
  for (double g : x.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(Rng, SameSeedSameSequence) {
  RngState a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
  EXPECT_EQ(a, b);
}

TEST(Rng, SplitStreamsDifferAndDoNotAdvanceParent) {
  RngState root(1);
  RngState s1 = root.split(1), s2 = root.split(2);
  EXPECT_EQ(root.counter(), 0u);
  EXPECT_NE(s1.next_u64(), s2.next_u64());
  EXPECT_EQ(root.split(1).next_u64(), RngState(1).split(1).next_u64());
}

TEST(Rng, ResumesFromSavedState) {
  RngState a(9);
  for (int i = 0; i < 17; ++i) a.next_u64();
  RngState b(a.seed(), a.counter());
  EXPECT_EQ(a.normal(), b.normal());
}

TEST(Rng, UniformStaysInOpenInterval) {
  RngState rng(3);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    mean += u / n;
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_NEAR(mean, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
  RngState rng(11);
  double m = 0.0, s = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    m += z;
    s += z * z;
  }
  m /= n;
  s = s / n - m * m;
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(s, 1.0, 0.02);
}

TEST(Rng, UniformIndexCoversRange) {
  RngState rng(2);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 5000; ++i) ++hits[rng.uniform_index(5)];
  for (int h : hits) EXPECT_NEAR(h, 1000, 120);
}
