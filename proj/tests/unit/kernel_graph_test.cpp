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

#include "fairshift/kernel_graph.hpp"
#include "oracles.hpp"

namespace fairshift {
namespace {

LaplacianGraph two_point_graph() {
  Matrix k(2, 2);
  k << 1.0, 0.5, 0.5, 1.0;
  return LaplacianGraph::from_kernel(k, 1);
}

LaplacianGraph random_graph(std::uint64_t seed, Eigen::Index ns, Eigen::Index nt,
                            double bandwidth = 1.0) {
  const Matrix s = oracle::gaussian_matrix(seed, ns, 2);
  Matrix t = oracle::gaussian_matrix(seed + 7777, nt, 2);
  t.col(0).array() += 1.0;
  return build_graph(s, t, KernelSpec::rbf(bandwidth));
}

TEST(KernelValue, IdenticalPointsGiveOne) {
  const Vector x = oracle::gaussian_vector(1, 4);
  EXPECT_EQ(kernel_value(KernelSpec::rbf(0.7), x, x), 1.0);
  EXPECT_EQ(kernel_value(KernelSpec::laplace(0.7), x, x), 1.0);
}

TEST(KernelValue, FairProjectionIgnoresProtectedCoordinate) {
  Matrix p = Matrix::Identity(2, 2);
  p(1, 1) = 0.0;
  const KernelSpec k = KernelSpec::rbf(1.0, MetricSpec::fair_projection(p));
  Vector x(2), y(2);
  x << 0.3, -5.0;
  y << 0.3, 9.0;
  EXPECT_EQ(kernel_value(k, x, y), 1.0);
}

TEST(KernelValue, RbfAtOneBandwidth) {
  Vector x(3), y(3);
  x << 0.0, 0.0, 0.0;
  y << 1.2, 1.6, 0.0;  // distance 2
  const double v = kernel_value(KernelSpec::rbf(2.0), x, y);
  EXPECT_DOUBLE_EQ(v, std::exp(-0.5));
  EXPECT_NEAR(v, 0.60653, 5e-6);
}

TEST(KernelValue, LaplaceDecaysWithDistance) {
  Vector x(1), y(1);
  x << 0.0;
  y << 3.0;
  EXPECT_DOUBLE_EQ(kernel_value(KernelSpec::laplace(1.5), x, y), std::exp(-2.0));
}

TEST(MetricSpec, RejectsNonProjection) {
  Matrix p(2, 2);
  p << 1.0, 0.2, 0.0, 1.0;
  EXPECT_THROW(MetricSpec::fair_projection(p), ValidationError);
  EXPECT_THROW(MetricSpec::fair_projection(2.0 * Matrix::Identity(2, 2)), ValidationError);
}

TEST(MetricSpec, RemovingDirectionAnnihilatesIt) {
  Vector b(3);
  b << 1.0, 2.0, -2.0;
  const MetricSpec m = MetricSpec::removing(b);
  EXPECT_LT((m.projection * b).norm(), 1e-14);
  const Vector x = oracle::gaussian_vector(3, 3);
  EXPECT_NEAR(m.distance(x, x + 4.0 * b), 0.0, 1e-13);
}

TEST(KernelGraph, TwoPointLaplacianAndSpectrum) {
  const LaplacianGraph g = two_point_graph();
  Matrix expected(2, 2);
  expected << 0.5, -0.5, -0.5, 0.5;
  EXPECT_LE((g.laplacian() - expected).cwiseAbs().maxCoeff(), 1e-15);
  // Eigenvalues of [[a, -a], [-a, a]] are 0 and 2a.
  EXPECT_NEAR(g.L_R(), 1.0, 1e-14);
  EXPECT_NEAR(oracle::power_iteration(g.laplacian()), 1.0, 1e-12);
  EXPECT_NEAR(g.mu_R(), 0.5, 1e-15);
  EXPECT_FALSE(g.disconnected());
}

TEST(KernelGraph, TwoPointGraphFromDistances) {
  Matrix s(1, 1), t(1, 1);
  s << 0.0;
  t << std::sqrt(2.0 * std::log(2.0));
  const LaplacianGraph g = build_graph(s, t, KernelSpec::rbf(1.0));
  EXPECT_NEAR(g.kernel_matrix()(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(regularizer_constants(g).mu_R, 0.5, 1e-15);
  EXPECT_NEAR(regularizer_constants(g).L_R, 1.0, 1e-14);
}

TEST(KernelGraph, DuplicatedDataHasZeroRowSums) {
  const Matrix x = oracle::gaussian_matrix(5, 8, 3);
  const LaplacianGraph g = build_graph(x, x, KernelSpec::rbf(0.8));
  EXPECT_LE((g.laplacian() * Vector::Ones(16)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(KernelGraph, ZeroCrossKernelMatchesTargetOnlyBlock) {
  Matrix s = oracle::gaussian_matrix(6, 4, 2);
  s.array() += 1e6;
  const Matrix t = oracle::gaussian_matrix(7, 5, 2);
  const LaplacianGraph g = build_graph(s, t, KernelSpec::rbf(1.0));
  ASSERT_EQ(g.kernel_matrix().topRightCorner(4, 5).cwiseAbs().maxCoeff(), 0.0);
  // With no cross edges L_TT is the Laplacian of the target points alone,
  // whose smallest eigenvalue is 0.
  const Matrix kt = oracle::rbf_gram_loop(t, 1.0);
  Matrix lt = -kt;
  lt.diagonal() = kt.rowwise().sum() - kt.diagonal();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(lt);
  EXPECT_NEAR(g.mu_R(), es.eigenvalues()(0), 1e-12);
  EXPECT_TRUE(g.disconnected());
  EXPECT_TRUE(regularizer_constants(g).disconnected);
}

TEST(KernelGraph, ValidatesInputs) {
  EXPECT_THROW(build_graph(Matrix::Zero(2, 2), Matrix::Zero(2, 3), KernelSpec::rbf(1.0)),
               ValidationError);
  EXPECT_THROW(build_graph(Matrix::Zero(1, 2), Matrix::Zero(0, 2), KernelSpec::rbf(1.0)),
               ValidationError);
  EXPECT_THROW(build_graph(Matrix::Zero(2, 2), Matrix::Zero(2, 2), KernelSpec::rbf(-1.0)),
               ValidationError);
  Matrix asym(2, 2);
  asym << 1.0, 0.5, 0.4, 1.0;
  EXPECT_THROW(LaplacianGraph::from_kernel(asym, 1), ValidationError);
}

TEST(KernelGraph, GramMatchesLoopOracle) {
  const Matrix x = oracle::gaussian_matrix(8, 12, 3);
  const Matrix k = gram(KernelSpec::rbf(1.3), x);
  EXPECT_LE((k - oracle::rbf_gram_loop(x, 1.3)).cwiseAbs().maxCoeff(), 1e-14);
}

// Properties over random graphs.
class RandomGraphs : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomGraphs, LaplacianInvariants) {
  const LaplacianGraph g = random_graph(GetParam(), 10 + GetParam() % 7, 8 + GetParam() % 5);
  const Matrix& l = g.laplacian();
  const Matrix& k = g.kernel_matrix();
  const Eigen::Index n = g.size();
  EXPECT_LE((l - l.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((l * Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(l).eigenvalues()(0), -1e-10);
  EXPECT_GE(k.minCoeff(), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) EXPECT_LE(k(i, j), k(i, i));
  }
  EXPECT_GE(g.L_R(), g.mu_R());
  EXPECT_GT(g.mu_R(), 0.0);
}

TEST_P(RandomGraphs, LargestEigenvalueMatchesPowerIteration) {
  const LaplacianGraph g = random_graph(GetParam(), 12, 9);
  const double reference = oracle::power_iteration(g.laplacian());
  EXPECT_NEAR(g.L_R(), reference, 1e-6 * reference);
}

TEST_P(RandomGraphs, ScalingFeaturesAndBandwidthLeavesKernelUnchanged) {
  const Matrix s = oracle::gaussian_matrix(GetParam(), 6, 3);
  const Matrix t = oracle::gaussian_matrix(GetParam() + 1, 5, 3);
  const double c = 0.25 + static_cast<double>(GetParam() % 4);
  const LaplacianGraph a = build_graph(s, t, KernelSpec::rbf(0.9));
  const LaplacianGraph b = build_graph(c * s, c * t, KernelSpec::rbf(0.9 * c));
  EXPECT_LE((a.kernel_matrix() - b.kernel_matrix()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((a.laplacian() - b.laplacian()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_P(RandomGraphs, MuRIsSmallestEigenvalueOfTargetBlock) {
  const LaplacianGraph g = random_graph(GetParam(), 7, 6);
  const Matrix ltt = g.laplacian().bottomRightCorner(6, 6);
  // lambda_min(A) = ||A||_1 - lambda_max(||A||_1 I - A) for symmetric A.
  const double shift = ltt.cwiseAbs().colwise().sum().maxCoeff();
  const double reference =
      shift - oracle::power_iteration(shift * Matrix::Identity(6, 6) - ltt, 200000);
  EXPECT_NEAR(g.mu_R(), reference, 1e-8 * shift);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomGraphs, ::testing::Range<std::uint64_t>(0, 10));

}  // namespace
}  // namespace fairshift
