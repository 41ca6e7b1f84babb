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

#ifndef FAIRSHIFT_SOLVER_HPP_
#define FAIRSHIFT_SOLVER_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fairshift/data.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/model.hpp"
#include "fairshift/regularizers.hpp"

namespace fairshift {

// Quadratic loss 1/2 (a - b)^2 throughout; train_loss is its sample mean.
struct FitReport {
  double train_loss = 0.0;
  double regularizer_value = 0.0;
  double lambda = 0.0;
  double objective = 0.0;          // train_loss + lambda * regularizer_value
  double gradient_norm = 0.0;      // stationarity residual at the solution
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // accepted iterates (fit_adversarial)
};

struct FitResult {
  Model model;
  FitReport report;
};

namespace solver_detail {

// Solves A theta = b for symmetric PSD A with LDLT plus two refinement
// steps. A tiny reciprocal condition number is reported as NumericError.
inline Vector solve_normal_equations(const Matrix& a, const Vector& b, double ridge) {
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw NumericError("solver", "normal matrix factorization failed; use ridge > 0");
  }
  // LDLT's rcond estimate misses exact rank deficiency; the pivots do not.
  const Vector pivots = ldlt.vectorD().cwiseAbs();
  const double rcond = std::min(ldlt.rcond(), pivots.minCoeff() / std::max(pivots.maxCoeff(), 1e-300));
  if (!(rcond > 1e-15)) {
    throw NumericError("solver", "normal matrix is singular (rcond " +
                                     std::to_string(rcond) + ")" +
                                     (ridge == 0.0 ? "; use ridge > 0" : ""));
  }
  Vector x = ldlt.solve(b);
  for (int k = 0; k < 2; ++k) x += ldlt.solve(b - a * x);
  if (!x.allFinite()) throw NumericError("solver", "non-finite solution");
  return x;
}

inline void check_labeled(const Dataset& source, const char* op) {
  if (source.empty()) throw ValidationError(std::string(op) + ": source is empty");
  (void)source.training_labels();
}

}  // namespace solver_detail

// Least squares on the source sample.
inline FitResult fit_erm(const Dataset& source, const ModelSpec& spec) {
  spec.validate();
  solver_detail::check_labeled(source, "fit_erm");
  const Vector& y = source.training_labels();
  std::optional<Matrix> anchors;
  if (spec.family == ModelSpec::Family::KernelExpansion) anchors = source.features();
  const Matrix psi = design_matrix(spec, source.features(), anchors ? *anchors : Matrix(0, source.dim()));
  const double inv_n = 1.0 / static_cast<double>(source.rows());
  Matrix a = inv_n * (psi.transpose() * psi);
  a.diagonal().array() += spec.ridge;
  const Vector b = inv_n * (psi.transpose() * y);
  const Vector theta = solver_detail::solve_normal_equations(a, b, spec.ridge);
  FitResult out{Model(spec, theta, std::move(anchors)), {}};
  out.report.train_loss = quadratic_train_loss(psi * theta, y);
  out.report.objective = out.report.train_loss;
  out.report.gradient_norm = (a * theta - b).norm();
  out.report.iterations = 1;
  out.report.converged = out.report.gradient_norm <= 1e-8 * (1.0 + y.norm());
  return out;
}

// Minimizes (1/n_s) sum 1/2 (f(x_i) - y_i)^2 + lambda f(X)^T L f(X) / n^2
// over [source; target] in closed form. Target labels are never read.
inline FitResult fit_regularized(const Dataset& source, const Dataset& target_features,
                                 const ModelSpec& spec, const LaplacianGraph& graph,
                                 double lambda) {
  spec.validate();
  solver_detail::check_labeled(source, "fit_regularized");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("fit_regularized: lambda must be finite and >= 0");
  }
  if (graph.n_source() != source.rows() || graph.n_target() != target_features.rows()) {
    throw ValidationError("fit_regularized: graph was not built on [source; target]");
  }
  if (target_features.rows() > 0 && target_features.dim() != source.dim()) {
    throw ValidationError("fit_regularized: source and target dimensions differ");
  }
  const Vector& y = source.training_labels();
  const Matrix pooled = vstack(source.features(), target_features.features());
  std::optional<Matrix> anchors;
  if (spec.family == ModelSpec::Family::KernelExpansion) anchors = pooled;
  const Matrix psi = design_matrix(spec, pooled, anchors ? *anchors : Matrix(0, pooled.cols()));
  const auto psi_s = psi.topRows(source.rows());
  const double inv_ns = 1.0 / static_cast<double>(source.rows());
  const double n = static_cast<double>(graph.size());
  Matrix a = inv_ns * (psi_s.transpose() * psi_s);
  if (lambda > 0.0) a += (2.0 * lambda / (n * n)) * (psi.transpose() * (graph.laplacian() * psi));
  a = 0.5 * (a + a.transpose()).eval();
  a.diagonal().array() += spec.ridge;
  const Vector b = inv_ns * (psi_s.transpose() * y);
  const Vector theta = solver_detail::solve_normal_equations(a, b, spec.ridge);
  const Vector outputs = psi * theta;
  FitResult out{Model(spec, theta, std::move(anchors)), {}};
  out.report.lambda = lambda;
  out.report.train_loss = quadratic_train_loss(outputs.head(source.rows()), y);
  out.report.regularizer_value = laplacian_regularizer(graph, outputs).value;
  out.report.objective = out.report.train_loss + lambda * out.report.regularizer_value;
  out.report.gradient_norm = (a * theta - b).norm();
  out.report.iterations = 1;
  out.report.converged = out.report.gradient_norm <= 1e-8 * (1.0 + y.norm());
  return out;
}

namespace solver_detail {

struct AdversarialState {
  double objective = 0.0;
  double train_loss = 0.0;
  double reg = 0.0;
  Vector gradient;
};

// Objective and Danskin gradient at theta; the inner adversary always uses
// cfg.seed so the objective is a deterministic function of theta.
inline AdversarialState adversarial_state(const Model& m, const Matrix& x, const Vector& y,
                                          const Matrix& psi, const AdversaryConfig& cfg,
                                          double lambda) {
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const Vector fx = psi * m.weights();
  AdversarialState s;
  s.train_loss = quadratic_train_loss(fx, y);
  s.gradient = inv_n * (psi.transpose() * (fx - y));
  if (lambda > 0.0) {
    const AdversarialResult adv = adversarial_regularizer(m, m, x, cfg);
    s.reg = adv.value.value;
    const Matrix psi_moved = m.design(x + adv.displacements);
    const Vector r = fx - psi_moved * m.weights();
    s.gradient += (2.0 * lambda * inv_n) * ((psi - psi_moved).transpose() * r);
  }
  s.objective = s.train_loss + lambda * s.reg;
  return s;
}

}  // namespace solver_detail

// Alternating scheme for (1/n) sum 1/2 (f - y)^2 + lambda R_adv(f, f): the
// inner adversary solves for displacements, the outer loop steps the model
// parameters along the Danskin gradient, halving the step until the
// objective does not increase. Starts from the ERM solution.
inline FitResult fit_adversarial(const Dataset& source, const ModelSpec& spec,
                                 const AdversaryConfig& cfg, double lambda,
                                 int outer_iterations = 100) {
  cfg.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("fit_adversarial: lambda must be finite and >= 0");
  }
  if (outer_iterations < 1) throw ValidationError("fit_adversarial: outer_iterations must be >= 1");
  FitResult erm = fit_erm(source, spec);
  const Matrix& x = source.features();
  const Vector& y = source.training_labels();
  const Matrix psi = erm.model.design(x);
  const ModelSpec& mspec = erm.model.spec();
  const std::optional<Matrix>& anchors = erm.model.anchors();

  Model current = erm.model;
  solver_detail::AdversarialState state =
      solver_detail::adversarial_state(current, x, y, psi, cfg, lambda);
  if (!std::isfinite(state.objective)) {
    throw NumericError("solver", "fit_adversarial: non-finite objective at start");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(psi.transpose() * psi / static_cast<double>(x.rows()));
  const double curvature = std::max(es.eigenvalues().maxCoeff(), 1e-12);
  const double step_max = 1.0 / (curvature * (1.0 + 4.0 * lambda));
  double step = step_max;

  FitReport report;
  report.objective_trace.push_back(state.objective);
  int it = 0;
  for (; it < outer_iterations; ++it) {
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      Model trial(mspec, current.weights() - step * state.gradient, anchors);
      const solver_detail::AdversarialState next =
          solver_detail::adversarial_state(trial, x, y, psi, cfg, lambda);
      if (!std::isfinite(next.objective)) {
        std::string trace;
        for (double v : report.objective_trace) trace += " " + std::to_string(v);
        throw NumericError("solver", "fit_adversarial diverged at iteration " +
                                         std::to_string(it) + "; objective trace:" + trace);
      }
      if (next.objective <= state.objective) {
        current = std::move(trial);
        state = next;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    report.objective_trace.push_back(state.objective);
    step = std::min(2.0 * step, step_max);
  }
  report.lambda = lambda;
  report.train_loss = state.train_loss;
  report.regularizer_value = state.reg;
  report.objective = state.train_loss + lambda * state.reg;
  report.gradient_norm = state.gradient.norm();
  report.iterations = it;
  const auto& tr = report.objective_trace;
  if (tr.size() <= 1) {
    report.converged = true;
  } else {
    const std::size_t k = std::min<std::size_t>(10, tr.size() - 1);
    const double first = tr[tr.size() - 1 - k];
    report.converged = std::abs(first - tr.back()) <= 1e-6 * std::max(1.0, std::abs(first)) ||
                       it < outer_iterations;
  }
  return FitResult{std::move(current), std::move(report)};
}

inline Json to_json(const FitReport& r) {
  Json j;
  j["train_loss"] = r.train_loss;
  j["regularizer_value"] = r.regularizer_value;
  j["lambda"] = r.lambda;
  j["objective"] = r.objective;
  j["gradient_norm"] = r.gradient_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  return j;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_SOLVER_HPP_
