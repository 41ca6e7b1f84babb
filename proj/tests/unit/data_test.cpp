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

#include "fairshift/data.hpp"

namespace fairshift {
namespace {

CovariateShiftSpec sine_shift(std::uint64_t seed) {
  CovariateShiftSpec spec;
  spec.regression_fn = RegressionFunction::sine(2.0);
  spec.source_law = isotropic_law(Vector::Zero(1), 1.0);
  spec.target_law = isotropic_law(Vector::Constant(1, 2.0), 1.0);
  spec.noise_sd_source = spec.noise_sd_target = 0.1;
  spec.seed = seed;
  return spec;
}

FactorModelSpec factor_spec(Matrix a, Vector b, double sigma, std::uint64_t seed) {
  FactorModelSpec spec;
  spec.u_law = isotropic_law(Vector::Zero(a.cols()), 1.0);
  spec.loading = std::move(a);
  spec.protected_direction = std::move(b);
  spec.noise_sd = sigma;
  spec.seed = seed;
  return spec;
}

// Column means of the rows with protected attribute equal to `z`.
Vector group_mean(const Dataset& d, double z) {
  Vector sum = Vector::Zero(d.dim());
  double count = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d.protected_attribute()(i) == z) {
      sum += d.features().row(i).transpose();
      count += 1.0;
    }
  }
  return sum / count;
}

TEST(SplitMix64, MatchesReferenceSequence) {
  SplitMix64 g(0);
  EXPECT_EQ(g(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(g(), 0x6E789E6AA1B965F4ULL);
  EXPECT_EQ(g(), 0x06C45D188009454FULL);
}

TEST(SplitMix64, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(7, 0), derive_seed(7, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(SplitMix64, NormalsHaveUnitMoments) {
  SplitMix64 g(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = g.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
}

TEST(Dataset, RejectsNonFiniteFeatures) {
  Matrix x(2, 1);
  x << 1.0, std::nan("");
  EXPECT_THROW(Dataset{x}, ValidationError);
}

TEST(Dataset, RejectsLabelLengthMismatch) {
  EXPECT_THROW(Dataset(Matrix::Zero(3, 2), Domain::Source, Vector::Zero(2)), ValidationError);
}

TEST(Dataset, RejectsNonBinaryProtected) {
  Vector z(2);
  z << 0.0, 0.5;
  EXPECT_THROW(Dataset(Matrix::Zero(2, 1), Domain::Source, std::nullopt, z), ValidationError);
}

TEST(Dataset, HeldOutLabelsRefuseTraining) {
  const Dataset d(Matrix::Zero(2, 1), Domain::Target, Vector::Ones(2), std::nullopt,
                  LabelRole::HeldOut);
  EXPECT_NO_THROW(d.labels());
  EXPECT_THROW(d.training_labels(), ValidationError);
}

TEST(CovariateShift, ZeroNoiseLinearLabelsAreExact) {
  CovariateShiftSpec spec;
  spec.regression_fn = RegressionFunction::linear(Vector::Ones(2));
  spec.source_law = spec.target_law = isotropic_law(Vector::Zero(2), 1.0);
  spec.noise_sd_source = spec.noise_sd_target = 0.0;
  spec.seed = 5;
  const auto [s, t] = generate_covariate_shift(spec, 20, 30);
  for (const Dataset* d : {&s, &t}) {
    for (Eigen::Index i = 0; i < d->rows(); ++i) {
      EXPECT_EQ(d->labels()(i), d->features()(i, 0) + d->features()(i, 1));
    }
  }
}

TEST(CovariateShift, IsBitwiseDeterministic) {
  const auto [s1, t1] = generate_covariate_shift(sine_shift(42), 50, 60);
  const auto [s2, t2] = generate_covariate_shift(sine_shift(42), 50, 60);
  EXPECT_TRUE(s1.features() == s2.features());
  EXPECT_TRUE(s1.labels() == s2.labels());
  EXPECT_TRUE(t1.features() == t2.features());
  EXPECT_TRUE(t1.labels() == t2.labels());
}

TEST(CovariateShift, TargetLabelsAreHeldOut) {
  const auto [s, t] = generate_covariate_shift(sine_shift(1), 5, 5);
  EXPECT_EQ(s.domain(), Domain::Source);
  EXPECT_EQ(t.domain(), Domain::Target);
  EXPECT_NO_THROW(s.training_labels());
  EXPECT_THROW(t.training_labels(), ValidationError);
  EXPECT_TRUE(t.has_labels());
}

TEST(CovariateShift, TargetMeanMatchesLaw) {
  const auto [s, t] = generate_covariate_shift(sine_shift(3), 200, 200);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) sum += t.features()(i, 0);
  EXPECT_NEAR(sum / 200.0, 2.0, 2.0 / std::sqrt(200.0));
}

TEST(CovariateShift, LabelsFollowRegressionFunctionWithinNoise) {
  const auto [s, t] = generate_covariate_shift(sine_shift(4), 2000, 10);
  const Vector resid = s.labels() - s.features().col(0).unaryExpr([](double x) {
    return std::sin(2.0 * x);
  });
  EXPECT_NEAR(resid.mean(), 0.0, 4.0 * 0.1 / std::sqrt(2000.0));
  EXPECT_NEAR(std::sqrt(resid.squaredNorm() / 2000.0), 0.1, 0.01);
}

TEST(CovariateShift, RejectsIndefiniteCovariance) {
  CovariateShiftSpec spec = sine_shift(0);
  spec.source_law = GaussianLaw{Vector::Zero(2), Matrix::Identity(2, 2)};
  spec.source_law.covariance(1, 1) = -1.0;
  spec.target_law = isotropic_law(Vector::Zero(2), 1.0);
  try {
    generate_covariate_shift(spec, 3, 3);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("positive semidefinite"), std::string::npos);
  }
}

TEST(CovariateShift, RejectsNegativeNoiseAndEmptySizes) {
  CovariateShiftSpec spec = sine_shift(0);
  spec.noise_sd_target = -0.1;
  EXPECT_THROW(generate_covariate_shift(spec, 3, 3), ValidationError);
  EXPECT_THROW(generate_covariate_shift(sine_shift(0), 0, 3), ValidationError);
}

TEST(RegressionCatalog, EvaluatesEachShape) {
  Vector x(2);
  x << 0.5, -1.0;
  Vector w(2);
  w << 2.0, 3.0;
  EXPECT_DOUBLE_EQ(RegressionFunction::linear(w, 1.0).value(x), 2.0 * 0.5 - 3.0 + 1.0);
  EXPECT_DOUBLE_EQ(RegressionFunction::sine(3.0).value(x), std::sin(1.5));
  EXPECT_DOUBLE_EQ(RegressionFunction::step(0.0).value(x), 1.0);
  EXPECT_DOUBLE_EQ(RegressionFunction::step(0.0, 1.0, 1).value(x), 0.0);
  EXPECT_DOUBLE_EQ(RegressionFunction::quadratic(2.0, 1).value(x), 2.0);
  EXPECT_DOUBLE_EQ(RegressionFunction::sine(1.0).scaled(2.0).shifted(0.5).value(x),
                   2.0 * std::sin(0.5) + 0.5);
}

TEST(FactorModel, ZeroDirectionGivesMatchingGroupMeans) {
  Matrix a(3, 2);
  a << 1, 0, 0, 1, 1, 1;
  const FactorModelSpec spec = factor_spec(a, Vector::Zero(3), 0.3, 8);
  const Eigen::Index n = 4000;
  const double balance = 0.3;
  const Dataset d = generate_factor_model(spec, n, balance);
  const Vector diff = group_mean(d, 1.0) - group_mean(d, 0.0);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double sd_total = std::sqrt(a.row(j).squaredNorm() + 0.09);
    EXPECT_LE(std::abs(diff(j)),
              4.0 * sd_total / std::sqrt(static_cast<double>(n) * std::min(balance, 1 - balance)));
  }
}

TEST(FactorModel, ProtectedGroupMeanIsShiftedByDirection) {
  const Eigen::Index n = 2000;
  Vector b(2);
  b << 0.0, 1.0;
  const Dataset d = generate_factor_model(factor_spec(Matrix::Identity(2, 2), b, 0.0, 2), n, 0.5);
  EXPECT_NEAR(group_mean(d, 1.0)(1), 1.0, 4.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(group_mean(d, 0.0)(1), 0.0, 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST(FactorModel, ProtectedCountIsReproducible) {
  Vector b(2);
  b << 0.0, 1.0;
  const FactorModelSpec spec = factor_spec(Matrix::Identity(2, 2), b, 0.1, 99);
  const double c1 = generate_factor_model(spec, 1000, 0.5).protected_attribute().sum();
  const double c2 = generate_factor_model(spec, 1000, 0.5).protected_attribute().sum();
  EXPECT_EQ(c1, c2);
  EXPECT_GT(c1, 400.0);
  EXPECT_LT(c1, 600.0);
}

TEST(FactorModel, RowsFollowTheFactorStructureExactlyWithoutNoise) {
  Vector b(3);
  b << 0.2, -0.4, 0.1;
  Matrix a(3, 1);
  a << 1.0, 2.0, -1.0;
  const Dataset d = generate_factor_model(factor_spec(a, b, 0.0, 6), 50, 0.5);
  // x - b z lies on span(a) when sigma = 0.
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const Vector r = d.features().row(i).transpose() - d.protected_attribute()(i) * b;
    const double u = r.dot(a.col(0)) / a.col(0).squaredNorm();
    EXPECT_LT((r - u * a.col(0)).norm(), 1e-12);
  }
}

TEST(FactorModel, ValidatesShapesAndBalance) {
  const FactorModelSpec bad = factor_spec(Matrix::Identity(2, 2), Vector::Zero(3), 0.1, 0);
  EXPECT_THROW(generate_factor_model(bad, 10, 0.5), ValidationError);
  const FactorModelSpec ok = factor_spec(Matrix::Identity(2, 2), Vector::Zero(2), 0.1, 0);
  EXPECT_THROW(generate_factor_model(ok, 10, 0.0), ValidationError);
  EXPECT_THROW(generate_factor_model(ok, 10, 1.0), ValidationError);
  FactorModelSpec neg = ok;
  neg.noise_sd = -1.0;
  EXPECT_THROW(generate_factor_model(neg, 10, 0.5), ValidationError);
}

TEST(FactorModel, GroupsGeneratorSplitsEvenly) {
  const FactorModelSpec spec = factor_spec(Matrix::Identity(2, 2), Vector::Ones(2), 0.1, 3);
  const Dataset d = generate_factor_model_groups(spec, 25);
  const GroupSplit s = split_by_protected(d);
  EXPECT_EQ(s.protected_group.rows(), 25);
  EXPECT_EQ(s.reference_group.rows(), 25);
}

TEST(FactorModel, PairedDrawSharesFactorsAcrossGroups) {
  const FactorModelSpec spec = factor_spec(Matrix::Identity(2, 2), Vector::Ones(2), 0.0, 3);
  const GroupSplit s = split_by_protected(generate_factor_model_groups(spec, 10, true));
  const Matrix diff = s.protected_group - s.reference_group;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    EXPECT_NEAR((diff.row(i).transpose() - Vector::Ones(2)).norm(), 0.0, 1e-14);
  }
}

// Property: with b = 0 the groups of any projection pass a 4-sigma mean test.
TEST(FactorModelProperty, ProjectedGroupsAgreeWhenDirectionIsZero) {
  Matrix a(4, 2);
  a << 1, 0, 0, 1, 1, 1, 0.5, -0.5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset d = generate_factor_model(factor_spec(a, Vector::Zero(4), 0.2, seed), 1000, 0.5);
    SplitMix64 rng(1000 + seed);
    Matrix phi(2, 4);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = rng.normal();
    const GroupSplit s = split_by_protected(d);
    const Matrix g1 = s.protected_group * phi.transpose();
    const Matrix g0 = s.reference_group * phi.transpose();
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double m1 = g1.col(j).mean(), m0 = g0.col(j).mean();
      const double v1 = (g1.col(j).array() - m1).square().sum() / (g1.rows() - 1);
      const double v0 = (g0.col(j).array() - m0).square().sum() / (g0.rows() - 1);
      const double z = (m1 - m0) / std::sqrt(v1 / g1.rows() + v0 / g0.rows());
      EXPECT_LE(std::abs(z), 4.0) << "seed " << seed << " coordinate " << j;
    }
  }
}

}  // namespace
}  // namespace fairshift
