/*
 * Copyright 2026 The fairshift Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <cmath>

#include "fairshift/regularizers.hpp"
#include "fairshift/model.hpp"
#include "oracles.hpp"

namespace fairshift {
namespace {

LaplacianGraph two_point_graph() {
  Matrix k(2, 2);
  k << 1.0, 0.5, 0.5, 1.0;
  return LaplacianGraph::from_kernel(k, 1);
}

LaplacianGraph random_graph(std::uint64_t seed, Eigen::Index ns, Eigen::Index nt) {
  return build_graph(oracle::gaussian_matrix(seed, ns, 2),
                     oracle::gaussian_matrix(seed + 1, nt, 2), KernelSpec::rbf(1.0));
}

Model linear_model(double intercept, const Vector& slope) {
  Vector w(1 + slope.size());
  w << intercept, slope;
  return Model(ModelSpec::linear(), w);
}

Model linear_1d(double intercept, double slope) {
  return linear_model(intercept, Vector::Constant(1, slope));
}

TEST(LaplacianRegularizer, ConstantOutputsGiveZero) {
  const LaplacianGraph g = random_graph(1, 5, 6);
  EXPECT_NEAR(laplacian_regularizer(g, Vector::Constant(11, 3.7)).value, 0.0, 1e-15);
}

TEST(LaplacianRegularizer, TwoPointValue) {
  Vector f(2);
  f << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(laplacian_regularizer(two_point_graph(), f).value, 0.125);
  EXPECT_DOUBLE_EQ(laplacian_regularizer_pairwise(two_point_graph(), f), 0.125);
}

TEST(LaplacianRegularizer, IsQuadraticInOutputs) {
  const LaplacianGraph g = random_graph(2, 4, 4);
  const Vector f = oracle::gaussian_vector(3, 8);
  const double base = laplacian_regularizer(g, f).value;
  for (double c : {-2.0, 0.5, 3.0}) {
    EXPECT_NEAR(laplacian_regularizer(g, c * f).value, c * c * base, 1e-14 * c * c);
  }
}

TEST(LaplacianRegularizer, LengthMismatchIsRejected) {
  EXPECT_THROW(laplacian_regularizer(two_point_graph(), Vector::Zero(3)), ValidationError);
}

TEST(LaplacianRegularizer, ZeroOutputsGiveExactlyZeroGradient) {
  const RegularizerValue r = laplacian_regularizer(random_graph(4, 5, 5), Vector::Zero(10));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.gradient->isZero(0.0));
}

TEST(LaplacianRegularizer, ZeroExactlyOnComponentwiseConstants) {
  // Two clusters far apart: outputs constant per cluster lie in the kernel.
  Matrix s = oracle::gaussian_matrix(5, 4, 2, 0.1);
  Matrix t = oracle::gaussian_matrix(6, 4, 2, 0.1);
  s.bottomRows(2).array() += 1e4;
  t.bottomRows(2).array() += 1e4;
  const LaplacianGraph g = build_graph(s, t, KernelSpec::rbf(1.0));
  Vector f(8);
  f << 1, 1, 2, 2, 1, 1, 2, 2;
  EXPECT_NEAR(laplacian_regularizer(g, f).value, 0.0, 1e-15);
  f(0) = 1.5;
  EXPECT_GT(laplacian_regularizer(g, f).value, 1e-4);
}

class RandomInstances : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomInstances, MatrixAndPairwiseFormsAgree) {
  const LaplacianGraph g = random_graph(10 + GetParam(), 6 + GetParam() % 5, 7);
  const Vector f = oracle::gaussian_vector(20 + GetParam(), g.size(), 2.0);
  const double value = laplacian_regularizer(g, f).value;
  EXPECT_GE(value, 0.0);
  EXPECT_NEAR(value, laplacian_regularizer_pairwise(g, f), 1e-10);
  EXPECT_NEAR(value, oracle::pairwise_energy(g.kernel_matrix(), f), 1e-10);
}

TEST_P(RandomInstances, GradientMatchesFiniteDifferences) {
  const LaplacianGraph g = random_graph(30 + GetParam(), 5, 5);
  EXPECT_LT(laplacian_gradient_check(g, oracle::gaussian_vector(40 + GetParam(), 10)), 1e-5);
}

TEST_P(RandomInstances, AdversarialInnerGradientMatchesFiniteDifferences) {
  const Matrix x = oracle::gaussian_matrix(50 + GetParam(), 8, 1);
  const Matrix delta = oracle::gaussian_matrix(60 + GetParam(), 8, 1, 0.2);
  const RegressionFunction g = RegressionFunction::sine(1.5);
  EXPECT_LT(adversarial_gradient_check(linear_1d(0.1, 0.7), g, x, delta), 1e-4);
}

TEST_P(RandomInstances, AdversarialValueIsMonotoneInBudget) {
  const Matrix x1 = oracle::gaussian_matrix(70 + GetParam(), 30, 1);
  const Matrix x2 = oracle::gaussian_matrix(80 + GetParam(), 30, 2);
  const Model lin = linear_model(0.0, oracle::gaussian_vector(90 + GetParam(), 2));
  const RegressionFunction sine = RegressionFunction::sine(2.0);
  AdversaryConfig cfg;
  cfg.seed = GetParam();
  double prev_lin = 0.0, prev_sine = 0.0;
  for (double eps : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    cfg.budget = eps;
    const double v_lin = adversarial_regularizer(lin, lin, x2, cfg).value.value;
    const double v_sine = adversarial_regularizer(sine, sine, x1, cfg).value.value;
    EXPECT_GE(v_lin, prev_lin - 1e-12) << "eps " << eps;
    EXPECT_GE(v_sine, prev_sine - 1e-12) << "eps " << eps;
    prev_lin = v_lin;
    prev_sine = v_sine;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomInstances, ::testing::Range<std::uint64_t>(0, 20));

TEST(PopulationRegularizer, EqualConstantsGiveZero) {
  const Model c = Model::constant(2.0, 2);
  const Matrix s = oracle::gaussian_matrix(1, 20, 2), t = oracle::gaussian_matrix(2, 30, 2);
  EXPECT_EQ(population_kernel_regularizer(c, c, s, t, KernelSpec::rbf(1.0)).value, 0.0);
}

TEST(PopulationRegularizer, SinglePairWithUnitKernel) {
  Matrix s(1, 1), t(1, 1);
  s << 1.0;
  t << 0.0;
  const Model id = linear_1d(0.0, 1.0);
  const RegularizerValue r = population_kernel_regularizer(id, id, s, t, KernelSpec::constant_one());
  EXPECT_DOUBLE_EQ(r.value, 0.5);
}

TEST(PopulationRegularizer, RepeatingTargetLeavesEstimateUnchanged) {
  const Matrix s = oracle::gaussian_matrix(3, 40, 1);
  const Matrix t = oracle::gaussian_matrix(4, 25, 1);
  Matrix tt(50, 1);
  tt << t, t;
  const Model f = linear_1d(0.3, 1.2);
  const RegressionFunction g = RegressionFunction::sine(2.0);
  const double a = population_kernel_regularizer(f, g, s, t, KernelSpec::rbf(0.7)).value;
  const double b = population_kernel_regularizer(f, g, s, tt, KernelSpec::rbf(0.7)).value;
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(PopulationRegularizer, MatchesDirectPairLoop) {
  const Matrix s = oracle::gaussian_matrix(5, 13, 2);
  const Matrix t = oracle::gaussian_matrix(6, 300, 2);
  const Model f = linear_model(0.1, oracle::gaussian_vector(7, 2));
  const Model g = linear_model(-0.2, oracle::gaussian_vector(8, 2));
  const Vector fs = f.predict(s), gt = g.predict(t);
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
      const double d2 = (s.row(i) - t.row(j)).squaredNorm();
      total += 0.5 * (fs(i) - gt(j)) * (fs(i) - gt(j)) * std::exp(-d2 / 2.0);
    }
  }
  const RegularizerValue r = population_kernel_regularizer(f, g, s, t, KernelSpec::rbf(1.0));
  EXPECT_NEAR(r.value, total / (13.0 * 300.0), 1e-13);
  ASSERT_TRUE(r.standard_error.has_value());
  EXPECT_GT(*r.standard_error, 0.0);
}

TEST(PopulationRegularizer, RejectsEmptySamples) {
  const Model c = Model::constant(0.0, 1);
  EXPECT_THROW(population_kernel_regularizer(c, c, Matrix(0, 1), Matrix::Zero(2, 1),
                                             KernelSpec::rbf(1.0)),
               ValidationError);
}

// For D = X - X' ~ N(mu, s2) and K = exp(-D^2 / 2):
//   E[D^2 K] = exp(-mu^2 / (2 (1 + s2))) / sqrt(1 + s2) * (v + m^2)
// with v = s2 / (1 + s2), m = mu / (1 + s2).
double linear_kernel_regularizer(double w, double mean_s, double mean_t, double s2) {
  const double mu = mean_s - mean_t;
  const double c = std::exp(-mu * mu / (2.0 * (1.0 + s2))) / std::sqrt(1.0 + s2);
  const double v = s2 / (1.0 + s2), m = mu / (1.0 + s2);
  return 0.5 * w * w * c * (v + m * m);
}

TEST(PopulationRegularizer, QuadratureMatchesClosedFormForLinearModels) {
  const Model f = linear_1d(0.4, 1.7);
  const GaussianLaw p = isotropic_law(Vector::Zero(1), 1.0);
  const GaussianLaw q = isotropic_law(Vector::Constant(1, 1.5), 1.0);
  const double quad = gaussian_quadrature_regularizer(f, f, p, q, KernelSpec::rbf(1.0));
  EXPECT_NEAR(quad, linear_kernel_regularizer(1.7, 0.0, 1.5, 2.0), 1e-12);
}

TEST(PopulationRegularizer, GaussHermiteIntegratesPolynomialMoments) {
  const auto [z, w] = gauss_hermite_rule(20);
  EXPECT_NEAR(w.sum(), 1.0, 1e-14);
  EXPECT_NEAR((w.array() * z.array().square()).sum(), 1.0, 1e-12);
  EXPECT_NEAR((w.array() * z.array().pow(4)).sum(), 3.0, 1e-11);
  EXPECT_NEAR((w.array() * z.array().pow(6)).sum(), 15.0, 1e-10);
}

TEST(PopulationRegularizer, MonteCarloEstimateCoversClosedForm) {
  const GaussianLaw p = isotropic_law(Vector::Zero(1), 1.0);
  const GaussianLaw q = isotropic_law(Vector::Constant(1, 1.0), 1.0);
  SplitMix64 rp(1), rq(2);
  const Matrix s = p.sample(rp, 2000), t = q.sample(rq, 2000);
  const Model f = linear_1d(0.0, 1.0);
  const RegularizerValue r = population_kernel_regularizer(f, f, s, t, KernelSpec::rbf(1.0));
  EXPECT_NEAR(r.value, linear_kernel_regularizer(1.0, 0.0, 1.0, 2.0), 4.0 * *r.standard_error);
}

// Sample regularizer on [source; target] against the population value: the
// source-target block converges to R(f, f).
TEST(PopulationRegularizer, SampleRegularizerConvergesToPopulation) {
  const GaussianLaw p = isotropic_law(Vector::Zero(1), 1.0);
  const GaussianLaw q = isotropic_law(Vector::Constant(1, 1.0), 1.0);
  SplitMix64 rp(11), rq(12);
  const Matrix s = p.sample(rp, 1000), t = q.sample(rq, 1000);
  const LaplacianGraph g = build_graph(s, t, KernelSpec::rbf(1.0));
  const std::vector<RegressionFunction> models = {
      RegressionFunction::sine(1.0), RegressionFunction::sine(2.0, 0.5),
      RegressionFunction::quadratic(0.5), RegressionFunction::linear(Vector::Constant(1, 1.0)),
      RegressionFunction::sine(0.5).shifted(0.3)};
  for (const RegressionFunction& f : models) {
    Vector out(2000);
    out << f.predict(s), f.predict(t);
    const double sample = cross_domain_regularizer(g, out);
    const double population = gaussian_quadrature_regularizer(f, f, p, q, KernelSpec::rbf(1.0));
    EXPECT_LE(std::abs(sample - population) / population, 0.1);
  }
}

TEST(PopulationRegularizer, CrossBlockEqualsPairEstimator) {
  const Matrix s = oracle::gaussian_matrix(13, 15, 2), t = oracle::gaussian_matrix(14, 9, 2);
  const LaplacianGraph g = build_graph(s, t, KernelSpec::rbf(1.0));
  const Model f = linear_model(0.0, oracle::gaussian_vector(15, 2));
  Vector out(24);
  out << f.predict(s), f.predict(t);
  EXPECT_NEAR(cross_domain_regularizer(g, out),
              population_kernel_regularizer(f, f, s, t, KernelSpec::rbf(1.0)).value, 1e-14);
}

// Second derivative of E[(f(X) - g(X'))^2 K(X, X')] in g along h is
// 2 E[h(X')^2 K_Q(X')] >= 2 phi^2 ||h||_Q^2 with phi^2 = min K_Q.
TEST(PopulationRegularizer, SecondVariationIsBoundedBelow) {
  const Matrix s = oracle::gaussian_matrix(21, 400, 2);
  Matrix t = oracle::gaussian_matrix(22, 300, 2);
  t.col(0).array() += 0.5;
  const KernelSpec k = KernelSpec::rbf(1.5);
  const Vector kq = gram(k, s, t).colwise().mean().transpose();
  const double phi2 = kq.minCoeff();
  ASSERT_GT(phi2, 0.0);
  const Model f = linear_model(0.2, oracle::gaussian_vector(23, 2));
  const Model g = linear_model(-0.1, oracle::gaussian_vector(24, 2));
  auto unhalved = [&](const Model& gg) {
    return 2.0 * population_kernel_regularizer(f, gg, s, t, k).value;
  };
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const Vector hw = oracle::gaussian_vector(100 + trial, 3);
    const Model h(ModelSpec::linear(), hw);
    const double step = 1e-2;
    const Model plus(ModelSpec::linear(), g.weights() + step * hw);
    const Model minus(ModelSpec::linear(), g.weights() - step * hw);
    const double second = (unhalved(plus) - 2.0 * unhalved(g) + unhalved(minus)) / (step * step);
    const double h_norm2 = h.predict(t).squaredNorm() / static_cast<double>(t.rows());
    // The functional is quadratic in g, so the difference quotient is exact
    // up to rounding and equals 2 mean_j h(x_j)^2 K_Q(x_j).
    EXPECT_NEAR(second, 2.0 * (h.predict(t).array().square() * kq.array()).mean(),
                1e-6 * second);
    EXPECT_GE(second, 2.0 * phi2 * h_norm2 * (1.0 - 0.05));
  }
}

TEST(AdversarialRegularizer, ZeroBudgetIsPlainDiscrepancy) {
  const Matrix x = oracle::gaussian_matrix(31, 20, 2);
  const Model f = linear_model(0.1, oracle::gaussian_vector(32, 2));
  const Model g = linear_model(-0.3, oracle::gaussian_vector(33, 2));
  AdversaryConfig cfg;
  cfg.budget = 0.0;
  const AdversarialResult r = adversarial_regularizer(f, g, x, cfg);
  EXPECT_NEAR(r.value.value, (f.predict(x) - g.predict(x)).squaredNorm() / 20.0, 1e-14);
  EXPECT_TRUE(r.displacements.isZero(0.0));
}

TEST(AdversarialRegularizer, LinearModelAgainstGridSearch) {
  const Matrix x = oracle::gaussian_matrix(34, 25, 1);
  const double w = 1.3, eps = 0.4;
  const Model f = linear_1d(0.2, w);
  AdversaryConfig cfg;
  cfg.budget = eps;
  cfg.seed = 9;
  const AdversarialResult r = adversarial_regularizer(f, f, x, cfg);
  // Best common shift delta_i = d with |d| <= eps, by grid search.
  const double grid = oracle::grid_max(
      [&](double d) { return (f.predict(x) - f.predict(x.array() + d)).squaredNorm() / 25.0; },
      -eps, eps, 4001);
  EXPECT_GE(r.value.value, grid - 1e-12);
  // Exact sup over the mean-norm ball concentrates the budget on one point.
  EXPECT_LE(r.value.value, w * w * 25.0 * eps * eps + 1e-12);
  EXPECT_GE(r.value.value, 0.0);
  EXPECT_LE(mean_row_norm(r.displacements), eps * (1.0 + 1e-6));
}

TEST(AdversarialRegularizer, ConstantModelIsInvariant) {
  const Matrix x = oracle::gaussian_matrix(35, 10, 3);
  const Model c = Model::constant(1.5, 3);
  for (double eps : {0.0, 0.3, 5.0}) {
    AdversaryConfig cfg;
    cfg.budget = eps;
    EXPECT_EQ(adversarial_regularizer(c, c, x, cfg).value.value, 0.0);
  }
}

TEST(AdversarialRegularizer, RespectsBudgetOnNonlinearModel) {
  const Matrix x = oracle::gaussian_matrix(36, 40, 2);
  const Model f = Model(ModelSpec::polynomial(3), oracle::gaussian_vector(37, 7));
  AdversaryConfig cfg;
  cfg.budget = 0.25;
  cfg.steps = 80;
  const AdversarialResult r = adversarial_regularizer(f, f, x, cfg);
  EXPECT_LE(mean_row_norm(r.displacements), 0.25 * (1.0 + 1e-6));
  EXPECT_NEAR(r.value.value,
              (f.predict(x) - f.predict(x + r.displacements)).squaredNorm() / 40.0, 1e-12);
}

TEST(AdversarialRegularizer, StepFunctionIsNotDifferentiable) {
  const RegressionFunction step = RegressionFunction::step(0.0);
  AdversaryConfig cfg;
  cfg.budget = 0.1;
  EXPECT_THROW(adversarial_regularizer(step, step, Matrix::Zero(3, 1), cfg), UnsupportedOperation);
}

TEST(AdversarialRegularizer, StepSupCountsCheapestCrossings) {
  Matrix x(4, 1);
  x << -0.25, 0.5, -2.0, 1.0;
  const RegressionFunction step = RegressionFunction::step(0.0, 2.0);
  // Crossing costs are 0.25, 0.5, 1, 2 against a total budget of 4 * eps.
  EXPECT_DOUBLE_EQ(step_adversarial_sup(step, x, 0.125), 4.0 * 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(step_adversarial_sup(step, x, 0.25), 4.0 * 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(step_adversarial_sup(step, x, 1.0), 4.0 * 4.0 / 4.0);
  EXPECT_DOUBLE_EQ(step_adversarial_sup(step, x, 0.0), 0.0);
}

TEST(AdversaryConfig, Validates) {
  AdversaryConfig cfg;
  cfg.budget = -1.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.budget = 0.1;
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

}  // namespace
}  // namespace fairshift
