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

#ifndef FAIRSHIFT_REGULARIZERS_HPP_
#define FAIRSHIFT_REGULARIZERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fairshift/data.hpp"
#include "fairshift/errors.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/linalg.hpp"
#include "fairshift/predictor.hpp"
#include "fairshift/rng.hpp"

namespace fairshift {

struct RegularizerValue {
  double value = 0.0;
  std::optional<Vector> gradient;
  // Monte Carlo standard error, for sampled estimates.
  std::optional<double> standard_error;
};

// Displacements delta_i with mean ||delta_i|| <= budget.
struct AdversaryConfig {
  double budget = 0.0;
  int steps = 50;
  double step_size = 0.1;
  // Unused: the budget is enforced exactly by the projection.
  double penalty_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(budget >= 0.0) || !std::isfinite(budget)) {
      throw ValidationError("AdversaryConfig: budget must be finite and >= 0");
    }
    if (steps < 1) throw ValidationError("AdversaryConfig: steps must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("AdversaryConfig: step_size must be > 0");
    if (!(penalty_weight > 0.0)) {
      throw ValidationError("AdversaryConfig: penalty_weight must be > 0");
    }
  }
};

// R_n(f) = f^T L f / n^2, gradient 2 L f / n^2.
inline RegularizerValue laplacian_regularizer(const LaplacianGraph& graph,
                                              const Vector& outputs) {
  const Eigen::Index n = graph.size();
  if (outputs.size() != n) {
    throw ValidationError("laplacian_regularizer: outputs have length " +
                          std::to_string(outputs.size()) + ", graph has " +
                          std::to_string(n) + " nodes");
  }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  const Vector lf = graph.laplacian() * outputs;
  RegularizerValue r;
  r.value = std::max(0.0, outputs.dot(lf)) / n2;
  r.gradient = (2.0 / n2) * lf;
  return r;
}

// (1 / (2 n^2)) sum_{i,j} K_ij (f_i - f_j)^2, the same quantity as above.
inline double laplacian_regularizer_pairwise(const LaplacianGraph& graph,
                                             const Vector& outputs) {
  const Eigen::Index n = graph.size();
  if (outputs.size() != n) {
    throw ValidationError("laplacian_regularizer_pairwise: length mismatch");
  }
  const Matrix& k = graph.kernel_matrix();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n * n));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = outputs(i) - outputs(j);
      terms.push_back(k(i, j) * d * d);
    }
  }
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  return pairwise_sum(terms.data(), terms.size()) / (2.0 * n2);
}

// Source-target block of the sample regularizer,
//   (1 / (n_s n_t)) sum_{i in S, j in T} 1/2 K_ij (f_i - f_j)^2,
// whose limit is R(f, f) = E[1/2 (f(X_s) - f(X_t))^2 K(X_s, X_t)].
inline double cross_domain_regularizer(const LaplacianGraph& graph, const Vector& outputs) {
  if (outputs.size() != graph.size()) {
    throw ValidationError("cross_domain_regularizer: length mismatch");
  }
  const Eigen::Index ns = graph.n_source(), nt = graph.n_target();
  if (ns == 0 || nt == 0) {
    throw ValidationError("cross_domain_regularizer: both domains must be nonempty");
  }
  const auto kst = graph.kernel_matrix().topRightCorner(ns, nt);
  const Eigen::ArrayXd fs = outputs.head(ns).array();
  double total = 0.0;
  for (Eigen::Index j = 0; j < nt; ++j) {
    total += ((fs - outputs(ns + j)).square() * kst.col(j).array()).sum();
  }
  return 0.5 * total / (static_cast<double>(ns) * static_cast<double>(nt));
}

// Two-sample statistics over all (source, target) pairs, one target column
// at a time so memory stays O(n_s).
struct PairStatistic {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct PairMoments {
  std::vector<PairStatistic> stats;
  Vector kernel_target_means;  // K_Q(x_tj) = mean_i K(x_si, x_tj)
  Vector kernel_source_means;  // mean_j K(x_si, x_tj)
};

// For each (a, b) in `sides` (a on source rows, b on target rows):
//   mean over pairs of 1/2 (a_i - b_j)^2 K(x_si, x_tj).
// The standard error uses the first-order (Hajek) variance of a two-sample
// U-statistic: var(row means) / n_s + var(column means) / n_t.
inline PairMoments kernel_pair_moments(
    const KernelSpec& kernel, const Matrix& xs, const Matrix& xt,
    const std::vector<std::pair<Vector, Vector>>& sides) {
  const Eigen::Index ns = xs.rows();
  const Eigen::Index nt = xt.rows();
  if (ns == 0 || nt == 0) {
    throw ValidationError("kernel_pair_moments: datasets must be nonempty");
  }
  for (const auto& [a, b] : sides) {
    if (a.size() != ns || b.size() != nt) {
      throw ValidationError("kernel_pair_moments: output lengths do not match "
                            "the samples");
    }
  }
  const std::size_t m = sides.size();
  std::vector<Vector> row_sums(m, Vector::Zero(ns));
  std::vector<Vector> col_means(m, Vector(nt));
  PairMoments out;
  out.kernel_target_means.resize(nt);
  Vector k_rows = Vector::Zero(ns);
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index j0 = 0; j0 < nt; j0 += kBlock) {
    const Eigen::Index w = std::min(kBlock, nt - j0);
    const Matrix kb = gram(kernel, xs, xt.middleRows(j0, w));
    out.kernel_target_means.segment(j0, w) = kb.colwise().mean().transpose();
    k_rows += kb.rowwise().sum();
    for (std::size_t s = 0; s < m; ++s) {
      const Vector& a = sides[s].first;
      const Vector& b = sides[s].second;
      for (Eigen::Index c = 0; c < w; ++c) {
        const Eigen::ArrayXd d = a.array() - b(j0 + c);
        const Eigen::ArrayXd term = 0.5 * d.square() * kb.col(c).array();
        row_sums[s] += term.matrix();
        col_means[s](j0 + c) = term.mean();
      }
    }
  }
  out.kernel_source_means = k_rows / static_cast<double>(nt);
  for (std::size_t s = 0; s < m; ++s) {
    const Vector row_means = row_sums[s] / static_cast<double>(nt);
    PairStatistic st;
    st.mean = mean(col_means[s]);
    const double se_r = standard_error(row_means);
    const double se_c = standard_error(col_means[s]);
    st.standard_error = std::sqrt(se_r * se_r + se_c * se_c);
    out.stats.push_back(st);
  }
  return out;
}

// R(f, g) = E[1/2 (f(X_s) - g(X_t))^2 K(X_s, X_t)], estimated over all pairs
// of the two samples.
template <Predictor F, Predictor G>
RegularizerValue population_kernel_regularizer(const F& f, const G& g,
                                               const Matrix& source,
                                               const Matrix& target,
                                               const KernelSpec& kernel) {
  if (source.rows() == 0 || target.rows() == 0) {
    throw ValidationError("population_kernel_regularizer: datasets must be nonempty");
  }
  const PairMoments pm =
      kernel_pair_moments(kernel, source, target, {{f.predict(source), g.predict(target)}});
  RegularizerValue r;
  r.value = std::max(0.0, pm.stats[0].mean);
  r.standard_error = pm.stats[0].standard_error;
  return r;
}

template <Predictor F, Predictor G>
RegularizerValue population_kernel_regularizer(const F& f, const G& g,
                                               const Dataset& source,
                                               const Dataset& target,
                                               const KernelSpec& kernel) {
  return population_kernel_regularizer(f, g, source.features(), target.features(),
                                       kernel);
}

// Probabilists' Gauss-Hermite rule (Golub-Welsch): sum_k w_k h(x_k)
// approximates E h(Z), Z ~ N(0, 1); the weights sum to 1.
inline std::pair<Vector, Vector> gauss_hermite_rule(int nodes) {
  if (nodes < 1) throw ValidationError("gauss_hermite_rule: nodes must be >= 1");
  Matrix jacobi = Matrix::Zero(nodes, nodes);
  for (int k = 1; k < nodes; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  if (es.info() != Eigen::Success) {
    throw NumericError("regularizers", "Gauss-Hermite eigensolver failed");
  }
  const Vector w = es.eigenvectors().row(0).transpose().array().square().matrix();
  return {es.eigenvalues(), w / w.sum()};
}

// R(f, g) for one-dimensional Gaussian source and target laws by tensor
// Gauss-Hermite quadrature.
template <Predictor F, Predictor G>
double gaussian_quadrature_regularizer(const F& f, const G& g, const GaussianLaw& source,
                                       const GaussianLaw& target, const KernelSpec& kernel,
                                       int nodes = 80) {
  source.validate("source_law");
  target.validate("target_law");
  if (source.dim() != 1 || target.dim() != 1) {
    throw ValidationError("gaussian_quadrature_regularizer: laws must be one-dimensional");
  }
  const auto [z, w] = gauss_hermite_rule(nodes);
  const Matrix xs = (source.mean(0) + std::sqrt(source.covariance(0, 0)) * z.array()).matrix();
  const Matrix xt = (target.mean(0) + std::sqrt(target.covariance(0, 0)) * z.array()).matrix();
  const Vector fs = f.predict(xs), gt = g.predict(xt);
  const Matrix k = gram(kernel, xs, xt);
  double total = 0.0;
  for (Eigen::Index j = 0; j < nodes; ++j) {
    for (Eigen::Index i = 0; i < nodes; ++i) {
      const double d = fs(i) - gt(j);
      total += w(i) * w(j) * 0.5 * d * d * k(i, j);
    }
  }
  return total;
}

// J(delta) = (1/n) sum_i (f(x_i) - g(x_i + delta_i))^2 and its gradient
// with respect to the displacement matrix.
struct AdversarialObjective {
  double value = 0.0;
  Matrix gradient;
};

template <DifferentiablePredictor G>
AdversarialObjective adversarial_objective_given(const Vector& fx, const G& g,
                                                 const Matrix& x, const Matrix& delta) {
  const Eigen::Index n = x.rows();
  const Matrix moved = x + delta;
  const Vector r = fx - g.predict(moved);
  AdversarialObjective out;
  out.value = r.squaredNorm() / static_cast<double>(n);
  out.gradient.resize(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.gradient.row(i) = (-2.0 / static_cast<double>(n)) * r(i) *
                          g.input_gradient(moved.row(i).transpose()).transpose();
  }
  return out;
}

template <Predictor F, DifferentiablePredictor G>
AdversarialObjective adversarial_objective(const F& f, const G& g, const Matrix& x,
                                           const Matrix& delta) {
  return adversarial_objective_given(f.predict(x), g, x, delta);
}

inline double mean_row_norm(const Matrix& delta) {
  if (delta.rows() == 0) return 0.0;
  return mean(delta.rowwise().norm());
}

// Radial projection onto {delta : mean_i ||delta_i|| <= budget}.
inline void project_budget(Matrix& delta, double budget) {
  const double m = mean_row_norm(delta);
  if (m > budget) {
    if (budget <= 0.0) {
      delta.setZero();
    } else {
      delta *= budget / m;
    }
  }
}

inline Matrix random_directions(std::uint64_t seed, Eigen::Index n, Eigen::Index p,
                                double radius) {
  SplitMix64 rng(seed);
  Matrix d(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < p; ++j) d(i, j) = rng.normal();
      norm = d.row(i).norm();
    } while (norm == 0.0);
    d.row(i) *= radius / norm;
  }
  return d;
}

struct AdversarialResult {
  RegularizerValue value;
  Matrix displacements;
};

// Projected gradient ascent on J(delta) from delta_i = budget * u_i with
// random unit u_i. Per-sample steps are step_size * n * dJ/d delta_i; the
// best iterate is returned.
template <Predictor F, DifferentiablePredictor G>
AdversarialResult adversarial_regularizer(const F& f, const G& g, const Matrix& x,
                                          const AdversaryConfig& cfg) {
  cfg.validate();
  if (!g.differentiable()) {
    throw UnsupportedOperation("adversarial_regularizer: model family is not "
                               "differentiable");
  }
  const Eigen::Index n = x.rows();
  if (n == 0) throw ValidationError("adversarial_regularizer: empty dataset");
  const Vector fx = f.predict(x);
  AdversarialResult best;
  if (cfg.budget == 0.0) {
    best.displacements = Matrix::Zero(n, x.cols());
    const AdversarialObjective at = adversarial_objective_given(fx, g, x, best.displacements);
    best.value.value = at.value;
    best.value.gradient = Vector(Eigen::Map<const Vector>(at.gradient.data(), at.gradient.size()));
    return best;
  }
  Matrix delta = random_directions(cfg.seed, n, x.cols(), cfg.budget);
  double best_value = -1.0;
  for (int it = 0; it <= cfg.steps; ++it) {
    const AdversarialObjective at = adversarial_objective_given(fx, g, x, delta);
    if (!std::isfinite(at.value)) {
      throw NumericError("regularizers", "adversarial objective became non-finite "
                                         "at step " + std::to_string(it));
    }
    if (at.value > best_value) {
      best_value = at.value;
      best.displacements = delta;
      best.value.gradient =
          Vector(Eigen::Map<const Vector>(at.gradient.data(), at.gradient.size()));
    }
    if (it == cfg.steps) break;
    delta += (cfg.step_size * static_cast<double>(n)) * at.gradient;
    project_budget(delta, cfg.budget);
  }
  best.value.value = best_value;
  return best;
}

template <Predictor F, DifferentiablePredictor G>
AdversarialResult adversarial_regularizer(const F& f, const G& g, const Dataset& source,
                                          const AdversaryConfig& cfg) {
  return adversarial_regularizer(f, g, source.features(), cfg);
}

// Exact sup over mean-norm budget of (1/n) sum (f0(x_i) - f0(x_i + delta_i))^2
// for a step function f0: cheapest threshold crossings first (greedy
// knapsack with unit values). The sup is approached, not attained, since a
// crossing needs delta strictly past the threshold.
inline double step_adversarial_sup(const RegressionFunction& step, const Matrix& x,
                                   double budget) {
  if (step.kind() != RegressionFunction::Kind::Step) {
    throw ValidationError("step_adversarial_sup: needs a step function");
  }
  step.check_dimension(x.cols());
  const Eigen::Index n = x.rows();
  std::vector<double> cost(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    cost[static_cast<std::size_t>(i)] = std::abs(x(i, step.coordinate()) - step.threshold());
  }
  std::sort(cost.begin(), cost.end());
  const double total = budget * static_cast<double>(n);
  double spent = 0.0;
  Eigen::Index flipped = 0;
  for (double c : cost) {
    if (spent + c > total) break;
    spent += c;
    ++flipped;
  }
  const double jump = step.scale() * step.amplitude();
  return jump * jump * static_cast<double>(flipped) / static_cast<double>(n);
}

// Max normwise relative error of an analytic gradient against central
// differences.
inline double laplacian_gradient_check(const LaplacianGraph& graph, const Vector& outputs) {
  const Vector analytic = *laplacian_regularizer(graph, outputs).gradient;
  const Vector numeric = central_difference(
      [&](const Vector& v) { return laplacian_regularizer(graph, v).value; }, outputs);
  return max_relative_error(analytic, numeric);
}

template <Predictor F, DifferentiablePredictor G>
double adversarial_gradient_check(const F& f, const G& g, const Matrix& x,
                                  const Matrix& delta) {
  const Vector fx = f.predict(x);
  const AdversarialObjective at = adversarial_objective_given(fx, g, x, delta);
  const Vector analytic = Eigen::Map<const Vector>(at.gradient.data(), at.gradient.size());
  const Vector flat = Eigen::Map<const Vector>(delta.data(), delta.size());
  const Vector numeric = central_difference(
      [&](const Vector& v) {
        const Matrix d = Eigen::Map<const Matrix>(v.data(), delta.rows(), delta.cols());
        return adversarial_objective_given(fx, g, x, d).value;
      },
      flat);
  return max_relative_error(analytic, numeric);
}

}  // namespace fairshift

#endif  // FAIRSHIFT_REGULARIZERS_HPP_
