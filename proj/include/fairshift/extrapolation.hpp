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

#ifndef FAIRSHIFT_EXTRAPOLATION_HPP_
#define FAIRSHIFT_EXTRAPOLATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/regularizers.hpp"
#include "fairshift/rng.hpp"

namespace fairshift {

struct ExtrapolationResult {
  enum class Solver { ClosedForm, Iterative };
  Vector extended;
  double residual = 0.0;  // ||L_TS v + L_TT t||
  Solver solver = Solver::ClosedForm;
  bool jitter_used = false;
  int iterations = 0;
};

namespace extrapolation_detail {

inline void check_inputs(const LaplacianGraph& graph, const Vector& v, const char* op) {
  if (v.size() != graph.n_source()) {
    throw ValidationError(std::string(op) + ": source outputs have length " +
                          std::to_string(v.size()) + ", graph has n_source = " +
                          std::to_string(graph.n_source()));
  }
  if (graph.n_target() == 0) throw ValidationError(std::string(op) + ": graph has no targets");
  if (graph.disconnected()) throw DisconnectedGraphError("extrapolation", graph.mu_R());
}

}  // namespace extrapolation_detail

// y*(v) = argmin_t R_n(v, t) = -L_TT^{-1} L_TS v.
inline ExtrapolationResult extrapolate_closed_form(const LaplacianGraph& graph,
                                                   const Vector& source_outputs) {
  extrapolation_detail::check_inputs(graph, source_outputs, "extrapolate_closed_form");
  const Matrix ltt = graph.L_TT();
  const Vector rhs = -(graph.L_TS() * source_outputs);
  ExtrapolationResult r;
  Eigen::LLT<Matrix> llt(ltt);
  if (llt.info() != Eigen::Success) {
    Matrix jittered = ltt;
    jittered.diagonal().array() +=
        1e-12 * ltt.trace() / static_cast<double>(graph.n_target());
    llt.compute(jittered);
    r.jitter_used = true;
    if (llt.info() != Eigen::Success) {
      throw DisconnectedGraphError("extrapolation", graph.mu_R());
    }
  }
  r.extended = llt.solve(rhs);
  r.extended += llt.solve(rhs - ltt * r.extended);
  r.residual = (ltt * r.extended - rhs).norm();
  r.solver = ExtrapolationResult::Solver::ClosedForm;
  return r;
}

// Conjugate gradients on the target block of R_n(v, .) from t = 0.
inline ExtrapolationResult extrapolate_iterative(const LaplacianGraph& graph,
                                                 const Vector& source_outputs,
                                                 double tol = 1e-13,
                                                 int max_iters = 0) {
  extrapolation_detail::check_inputs(graph, source_outputs, "extrapolate_iterative");
  const Matrix ltt = graph.L_TT();
  const Vector rhs = -(graph.L_TS() * source_outputs);
  const Eigen::Index m = ltt.rows();
  if (max_iters <= 0) max_iters = static_cast<int>(10 * m + 100);
  Vector t = Vector::Zero(m);
  Vector res = rhs;
  Vector dir = res;
  double rr = res.squaredNorm();
  const double stop = tol * (1.0 + rhs.norm());
  ExtrapolationResult r;
  r.solver = ExtrapolationResult::Solver::Iterative;
  int it = 0;
  while (std::sqrt(rr) > stop && it < max_iters) {
    const Vector ad = ltt * dir;
    const double alpha = rr / dir.dot(ad);
    t += alpha * dir;
    res -= alpha * ad;
    const double rr_next = res.squaredNorm();
    dir = res + (rr_next / rr) * dir;
    rr = rr_next;
    ++it;
  }
  r.extended = std::move(t);
  r.residual = (ltt * r.extended - rhs).norm();
  r.iterations = it;
  if (!(r.residual <= 1e-8 * (1.0 + source_outputs.norm()))) {
    throw NumericError("extrapolation", "conjugate gradients stalled after " +
                                            std::to_string(it) + " iterations (residual " +
                                            std::to_string(r.residual) + ")");
  }
  return r;
}

// Outcome of a randomized check of one inequality.
struct InequalityReport {
  std::string inequality;
  int trials = 0;
  int violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();  // min (rhs - lhs)
  double max_slack = -std::numeric_limits<double>::infinity();
  double tolerance = 1e-9;
  std::map<std::string, double> constants;

  void record(double lhs, double rhs) {
    const double slack = rhs - lhs;
    ++trials;
    if (slack < -tolerance) ++violations;
    min_slack = std::min(min_slack, slack);
    max_slack = std::max(max_slack, slack);
  }
  bool holds() const { return violations == 0; }
};

inline Json to_json(const InequalityReport& r) {
  Json j;
  j["inequality"] = r.inequality;
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["min_slack"] = r.min_slack;
  j["max_slack"] = r.max_slack;
  j["tolerance"] = r.tolerance;
  j["holds"] = r.holds();
  j["constants"] = r.constants;
  return j;
}

struct Lemma1Report {
  InequalityReport lipschitz;
  InequalityReport distance;
  bool holds() const { return lipschitz.holds() && distance.holds(); }
};

// (a) ||y*(v1) - y*(v2)|| <= (L_R / mu_R) ||v1 - v2||
// (b) ||v_t - y*(v_s)||^2 <= (2n / mu~) R_n(v_s, v_t),  mu~ = 2 mu_R / n
// Vectors have i.i.d. N(0, 1) entries from seed.
inline Lemma1Report verify_lemma1(const LaplacianGraph& graph, int trials, std::uint64_t seed) {
  if (graph.disconnected()) throw DisconnectedGraphError("extrapolation", graph.mu_R());
  const Eigen::Index ns = graph.n_source();
  const Eigen::Index nt = graph.n_target();
  const double n = static_cast<double>(graph.size());
  const double mu = graph.mu_R();
  const double lr = graph.L_R();
  const double mu_scaled = 2.0 * mu / n;

  Lemma1Report rep;
  rep.lipschitz.inequality =
      "||y*(v1) - y*(v2)|| <= (L_R/mu_R) ||v1 - v2||, R_n = f'Lf/n^2, mu_R = lambda_min(L_TT), "
      "L_R = lambda_max(L)";
  rep.distance.inequality =
      "||v_t - y*(v_s)||^2 <= (2n/mu~) R_n(v_s, v_t), mu~ = 2 mu_R/n, R_n = f'Lf/n^2";
  for (InequalityReport* r : {&rep.lipschitz, &rep.distance}) {
    r->constants = {{"mu_R", mu},
                    {"L_R", lr},
                    {"mu_R_scaled", mu_scaled},
                    {"n_s", static_cast<double>(ns)},
                    {"n_t", static_cast<double>(nt)}};
  }
  SplitMix64 rng(seed);
  auto draw = [&rng](Eigen::Index len) {
    Vector v(len);
    for (Eigen::Index i = 0; i < len; ++i) v(i) = rng.normal();
    return v;
  };
  // One factorization serves every trial.
  Eigen::LLT<Matrix> llt(graph.L_TT());
  const Matrix lts = graph.L_TS();
  auto extend = [&](const Vector& v) -> Vector { return llt.solve(-(lts * v)); };
  for (int k = 0; k < trials; ++k) {
    const Vector v1 = draw(ns);
    const Vector v2 = draw(ns);
    rep.lipschitz.record((extend(v1) - extend(v2)).norm(), (lr / mu) * (v1 - v2).norm());
    const Vector vs = draw(ns);
    const Vector vt = draw(nt);
    Vector full(ns + nt);
    full << vs, vt;
    const double reg = laplacian_regularizer(graph, full).value;
    rep.distance.record((vt - extend(vs)).squaredNorm(), (2.0 * n / mu_scaled) * reg);
  }
  return rep;
}

struct Lemma2Report {
  InequalityReport strong_convexity;  // ||f - f0||^2 <= (2/mu_L) sum L(f_i, f0_i)
  InequalityReport lipschitz;         // |d1 L(a, b)| <= L_L |a - b|
  bool holds() const { return strong_convexity.holds() && lipschitz.holds(); }
};

// Quadratic loss 1/2 (a - b)^2 with mu_L = L_L = 1.
inline Lemma2Report verify_lemma2(int trials, std::uint64_t seed, Eigen::Index length = 50) {
  constexpr double mu_l = 1.0;
  constexpr double l_l = 1.0;
  Lemma2Report rep;
  rep.strong_convexity.inequality =
      "||f - f0||^2 <= (2/mu_L) sum_i 1/2 (f_i - f0_i)^2, quadratic loss, mu_L = 1";
  rep.lipschitz.inequality = "|a - b| <= L_L |a - b| for d/da 1/2 (a - b)^2, L_L = 1";
  for (InequalityReport* r : {&rep.strong_convexity, &rep.lipschitz}) {
    r->constants = {{"mu_L", mu_l}, {"L_L", l_l}};
  }
  SplitMix64 rng(seed);
  for (int k = 0; k < trials; ++k) {
    Vector f(length), f0(length);
    for (Eigen::Index i = 0; i < length; ++i) {
      f(i) = rng.normal();
      f0(i) = rng.normal();
    }
    const Vector d = f - f0;
    const double loss = 0.5 * d.squaredNorm();
    rep.strong_convexity.record(d.squaredNorm(), (2.0 / mu_l) * loss);
    const double a = f(0), b = f0(0);
    const double derivative = a - b;
    rep.lipschitz.record(std::abs(derivative), l_l * std::abs(a - b));
  }
  return rep;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_EXTRAPOLATION_HPP_
