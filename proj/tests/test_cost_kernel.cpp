#include <gtest/gtest.h>

#include <cmath>

#include "ipfp/cost_kernel.hpp"
#include "ipfp/exact_w1.hpp"
#include "ipfp/hilbert.hpp"
#include "support.hpp"

using namespace ipfp;
using support::line;

TEST(QuadraticCost, IdenticalSinglePoints) {
  const auto c = quadratic_cost(line({2.0}), line({2.0}), 0.7);
  EXPECT_EQ(c(0, 0), 0.0);
  EXPECT_EQ(c.sup_norm(), 0.0);
}

TEST(QuadraticCost, UnitDistance) {
  const auto c = quadratic_cost(line({0.0}), line({1.0}), 1.0);
  EXPECT_EQ(c(0, 0), 1.0);
}

TEST(QuadraticCost, TwoByTwo) {
  const auto s = line({0.0, 1.0});
  const auto c = quadratic_cost(s, s, 2.0);
  EXPECT_EQ(c.table(), Matrix<double>::from_rows({{0, 0.5}, {0.5, 0}}));
  EXPECT_EQ(c.lip_source(), LipschitzSource::analytic);
  EXPECT_DOUBLE_EQ(c.lip_const(), 2.0);  // 2 (1 + 1) / 2
}

TEST(QuadraticCost, Errors) {
  EXPECT_THROW(quadratic_cost(line({0.0}), line({0.0}), 0.0), Error);
  EXPECT_THROW(quadratic_cost(line({0.0}), make_space(FiniteMetricSpace::from_points({{0.0, 1.0}})), 1.0), Error);
}

TEST(DiscreteLipschitz, ConstantCostIsZero) {
  const auto s = line({0.0, 1.0, 3.0});
  EXPECT_EQ(discrete_lipschitz(table_cost(s, s, Matrix<double>(3, 3, 2.5))), 0.0);
}

TEST(DiscreteLipschitz, MetricCostIsOne) {
  Rng rng(17, "metric-cost");
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = support::random_points(rng, 5, 1);
    EXPECT_NEAR(discrete_lipschitz(absolute_cost(x, x, 1.0)), 1.0, 1e-12);
  }
}

TEST(DiscreteLipschitz, QuadraticOnUnitGrid) {
  const auto s = line({0.0, 1.0});
  EXPECT_DOUBLE_EQ(discrete_lipschitz(quadratic_cost(s, s, 1.0)), 1.0);
}

TEST(DiscreteLipschitz, CoincidentGridIsAnError) {
  const auto s = line({1.0});
  EXPECT_THROW(discrete_lipschitz(Matrix<double>(1, 1), *s, *s), Error);
}

TEST(CostModel, SupNormUsesAbsoluteValue) {
  const auto s = line({0.0, 1.0});
  const auto c = table_cost(s, s, Matrix<double>::from_rows({{0, -3}, {1, 0}}));
  EXPECT_EQ(c.sup_norm(), 3.0);
  EXPECT_EQ(c.lip_source(), LipschitzSource::discrete_estimate);
}

TEST(CostModel, AnalyticConstantBelowEstimateIsRejected) {
  const auto s = line({0.0, 1.0});
  const auto c = absolute_cost(s, s, 1.0);
  EXPECT_THROW(c.with_lipschitz(0.5), Error);
  EXPECT_EQ(c.with_lipschitz(2.0).lip_const(), 2.0);
}

TEST(CostModel, AnalyticLipDominatesEstimateOnRandomInstances) {
  Rng rng(3, "lip-dominance");
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = support::random_instance(rng, 8, 1.5);
    EXPECT_GE(inst.cost.lip_const(), discrete_lipschitz(inst.cost) * (1 - 1e-12));
  }
}

TEST(Kernel, EntrywiseBounds) {
  Rng rng(8, "kernel-bounds");
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = support::random_instance(rng, 10, 3.0);
    const KernelTable k(inst.cost);
    const double s = inst.cost.sup_norm();
    for (std::size_t i = 0; i < k.rows(); ++i)
      for (std::size_t j = 0; j < k.cols(); ++j) {
        EXPECT_EQ(k.log_kernel(i, j), -inst.cost(i, j));
        EXPECT_GE(k.kernel(i, j), std::exp(-s));
        EXPECT_LE(k.kernel(i, j), std::exp(s));
      }
  }
}

TEST(KernelApply, ZeroCostOnesGivesOnes) {
  Rng rng(1);
  const auto inst = support::zero_cost(rng, 4, 3);
  const KernelTable k(inst.cost);
  for (double v : kernel_apply_x(k, std::vector<double>(4, 1.0), inst.pi0)) EXPECT_NEAR(v, 1.0, 1e-15);
  for (double v : kernel_apply_y(k, std::vector<double>(3, 1.0), inst.pi1)) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(KernelApply, ZeroCostGivesMean) {
  Rng rng(2);
  const auto inst = support::zero_cost(rng, 4, 3);
  const KernelTable k(inst.cost);
  const std::vector<double> f{1.0, 2.0, 3.0, 4.0};
  double mean = 0.0;
  for (std::size_t i = 0; i < 4; ++i) mean += f[i] * inst.pi0.weight(i);
  for (double v : kernel_apply_x(k, f, inst.pi0)) EXPECT_NEAR(v, mean, 1e-14);
}

TEST(KernelApply, TwoPointInstance) {
  const auto inst = support::two_point();
  const KernelTable k(inst.cost);
  for (double v : kernel_apply_x(k, std::vector<double>(2, 1.0), inst.pi0))
    EXPECT_NEAR(v, 0.6839397205857212, 1e-15);
  for (double v : kernel_apply_y(k, std::vector<double>(2, 1.0), inst.pi1))
    EXPECT_NEAR(v, 0.6839397205857212, 1e-15);
}

TEST(KernelApply, RejectsNonPositiveInput) {
  const auto inst = support::two_point();
  const KernelTable k(inst.cost);
  EXPECT_THROW(kernel_apply_x(k, std::vector<double>{1.0, 0.0}, inst.pi0), Error);
  EXPECT_THROW(kernel_apply_y(k, std::vector<double>{-1.0, 1.0}, inst.pi1), Error);
}

TEST(KernelApply, PositivityScalingAndMeanBounds) {
  Rng rng(21, "kernel-apply");
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = support::random_instance(rng, 12, 2.0);
    const KernelTable k(inst.cost);
    std::vector<double> f(inst.pi0.size());
    for (double& v : f) v = rng.uniform(0.1, 5.0);
    const double lambda = rng.uniform(0.01, 100.0);
    std::vector<double> scaled(f);
    for (double& v : scaled) v *= lambda;
    const auto out = kernel_apply_x(k, f, inst.pi0);
    const auto out_scaled = kernel_apply_x(k, scaled, inst.pi0);
    double mean = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) mean += f[i] * inst.pi0.weight(i);
    const double s = inst.cost.sup_norm();
    for (std::size_t j = 0; j < out.size(); ++j) {
      EXPECT_GT(out[j], 0.0);
      EXPECT_NEAR(out_scaled[j] / (lambda * out[j]), 1.0, 1e-12);
      EXPECT_GE(out[j], std::exp(-s) * mean * (1 - 1e-12));
      EXPECT_LE(out[j], std::exp(s) * mean * (1 + 1e-12));
    }
  }
}

TEST(KernelApply, ExtremeCostDoesNotUnderflow) {
  const auto s = line({0.0, 1.0});
  const auto c = table_cost(s, s, Matrix<double>::from_rows({{800, 805}, {805, 800}}));
  const KernelTable k(c);
  const auto out = log_kernel_apply_x(k, std::vector<double>{0.0, 0.0}, DiscreteMeasure::uniform(s));
  for (double v : out) EXPECT_TRUE(std::isfinite(v));
}

// d_H(E_{pi0} f, E_{pi0_hat} f) <= 2 |1/f| (Lip(f) + Lip(c) |f|) e^{2|c|} W1(pi0, pi0_hat).
TEST(KernelApply, OperatorPerturbationBound) {
  Rng rng(44, "operator-perturbation");
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = support::random_instance(rng, 10, 1.5);
    const auto pi0_hat = support::random_measure(rng, inst.pi0.space_ptr());
    const KernelTable k(inst.cost);
    std::vector<double> f(inst.pi0.size());
    for (double& v : f) v = rng.uniform(0.5, 2.0);
    double inv_sup = 0.0, sup = 0.0;
    for (double v : f) {
      inv_sup = std::max(inv_sup, 1.0 / v);
      sup = std::max(sup, v);
    }
    const double lip_f = discrete_lipschitz(f, inst.pi0.space());
    const double w1 = wasserstein1(inst.pi0, pi0_hat).value;
    const double bound = 2.0 * inv_sup * (lip_f + inst.cost.lip_const() * sup) *
                         std::exp(2.0 * inst.cost.sup_norm()) * w1;
    const auto a = PositiveFunction::from_values(kernel_apply_x(k, f, inst.pi0));
    const auto b = PositiveFunction::from_values(kernel_apply_x(k, f, pi0_hat));
    EXPECT_LE(hilbert_metric(a, b), bound + 1e-9);
  }
}
