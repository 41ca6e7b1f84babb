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

#ifndef FAIRSHIFT_BOUNDS_HPP_
#define FAIRSHIFT_BOUNDS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairshift/data.hpp"
#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/model.hpp"
#include "fairshift/predictor.hpp"
#include "fairshift/regularizers.hpp"

namespace fairshift {

// One evaluated inequality lhs <= rhs = sum(rhs_terms).
//   holds <=> !degenerate && slack >= -tolerance
// tolerance is 1e-9 (1 + |rhs|) for exact evaluations and additionally at
// least 3 standard errors for Monte Carlo ones.
struct BoundReport {
  std::string theorem;
  std::string inequality;
  double lhs = 0.0;
  std::map<std::string, double> rhs_terms;
  std::map<std::string, double> constants;
  std::map<std::string, double> quantities;
  std::vector<std::uint64_t> seeds;
  double standard_error = 0.0;
  double tolerance = 0.0;
  double slack = 0.0;
  bool holds = false;
  bool degenerate = false;
  std::string note;

  double rhs() const {
    double s = 0.0;
    for (const auto& [name, v] : rhs_terms) s += v;
    return s;
  }

  // Recomputes slack, tolerance and verdict from lhs and rhs_terms.
  void finalize() {
    const double r = rhs();
    slack = r - lhs;
    tolerance = std::max(1e-9 * (1.0 + std::abs(r)), 3.0 * standard_error);
    holds = !degenerate && std::isfinite(slack) && slack >= -tolerance;
  }

  std::string verdict() const {
    if (degenerate) return "indeterminate";
    return holds ? "holds" : "fails";
  }
};

inline Json to_json(const BoundReport& r) {
  Json j;
  j["theorem"] = r.theorem;
  j["inequality"] = r.inequality;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs();
  j["rhs_terms"] = r.rhs_terms;
  j["constants"] = r.constants;
  j["quantities"] = r.quantities;
  j["seeds"] = r.seeds;
  j["standard_error"] = r.standard_error;
  j["tolerance"] = r.tolerance;
  j["slack"] = r.slack;
  j["holds"] = r.holds;
  j["degenerate"] = r.degenerate;
  j["verdict"] = r.verdict();
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

// Curvature constants of the loss: quadratic loss 1/2 (a - b)^2 has
// mu_L = L_L = 1 along coordinate differences.
struct LossConstants {
  double mu_L = 1.0;
  double L_L = 1.0;
};

struct Theorem1Constants {
  double alpha = 0.0;
  double beta = 0.0;
};

// alpha = max{ L_L L_R^2 (mu_L + 3 L_L) / (2 mu_R^2 mu_L) rho,
//              (2 + L_L) / (lambda mu_R) (1 + rho) }
// beta  = (2 + L_L + L_L^2) / mu_R (1 + rho)
inline Theorem1Constants theorem1_constants(double L_L, double mu_L, double L_R, double mu_R,
                                            double lambda, double rho) {
  Theorem1Constants c;
  const double a1 = L_L * L_R * L_R * (mu_L + 3.0 * L_L) / (2.0 * mu_R * mu_R * mu_L) * rho;
  const double a2 = (2.0 + L_L) / (lambda * mu_R) * (1.0 + rho);
  c.alpha = std::max(a1, a2);
  c.beta = (2.0 + L_L + L_L * L_L) / mu_R * (1.0 + rho);
  return c;
}

// Transductive bound on the given target points. The moduli entering
// alpha/beta are the strong-convexity/smoothness constants of R_n itself:
// mu~ = 2 mu_R / n and L~ = 2 L_R / n, with mu_R = lambda_min(L_TT),
// L_R = lambda_max(L).
template <Predictor F, Predictor F0>
BoundReport theorem1_report(const F& model, const Matrix& source, const Matrix& target,
                            const LaplacianGraph& graph, const F0& f0, double lambda,
                            LossConstants loss = {}) {
  if (graph.n_source() != source.rows() || graph.n_target() != target.rows()) {
    throw ValidationError("theorem1_report: graph was not built on [source; target]");
  }
  if (!(lambda > 0.0)) throw ValidationError("theorem1_report: lambda must be > 0");
  BoundReport r;
  r.theorem = "T1";
  r.inequality =
      "(1/n_t) sum L(f(x_t), f0(x_t)) <= alpha [(1/n_s) sum L(f(x_s), f0(x_s)) + lambda R_n(f(X))] "
      "+ beta R_n(f0(X)); R_n = f'Lf/n^2, L(a,b) = 1/2 (a-b)^2, moduli mu~ = 2 mu_R/n, "
      "L~ = 2 L_R/n";
  const Vector fs = model.predict(source), ft = model.predict(target);
  const Vector f0s = f0.predict(source), f0t = f0.predict(target);
  Vector f_all(graph.size()), f0_all(graph.size());
  f_all << fs, ft;
  f0_all << f0s, f0t;
  const double target_risk = quadratic_train_loss(ft, f0t);
  const double source_risk = quadratic_train_loss(fs, f0s);
  const double reg_f = laplacian_regularizer(graph, f_all).value;
  const double reg_f0 = laplacian_regularizer(graph, f0_all).value;

  const double n = static_cast<double>(graph.size());
  const double rho = static_cast<double>(source.rows()) / static_cast<double>(target.rows());
  const double mu_scaled = 2.0 * graph.mu_R() / n;
  const double lr_scaled = 2.0 * graph.L_R() / n;
  r.constants = {{"mu_R", graph.mu_R()},       {"L_R", graph.L_R()},
                 {"mu_R_scaled", mu_scaled},   {"L_R_scaled", lr_scaled},
                 {"mu_L", loss.mu_L},          {"L_L", loss.L_L},
                 {"lambda", lambda},           {"rho_n", rho},
                 {"n_s", static_cast<double>(source.rows())},
                 {"n_t", static_cast<double>(target.rows())}};
  r.quantities = {{"target_risk", target_risk},
                  {"source_risk", source_risk},
                  {"R_n_model", reg_f},
                  {"R_n_f0", reg_f0}};
  r.lhs = target_risk;
  if (graph.disconnected()) {
    r.degenerate = true;
    r.note = "mu_R <= 1e-12: graph disconnected, constants degenerate";
    r.rhs_terms = {{"alpha_source_risk", 0.0}, {"alpha_lambda_R_model", 0.0}, {"beta_R_f0", 0.0}};
    r.finalize();
    return r;
  }
  const Theorem1Constants c =
      theorem1_constants(loss.L_L, loss.mu_L, lr_scaled, mu_scaled, lambda, rho);
  r.constants["alpha_n"] = c.alpha;
  r.constants["beta_n"] = c.beta;
  r.rhs_terms = {{"alpha_source_risk", c.alpha * source_risk},
                 {"alpha_lambda_R_model", c.alpha * lambda * reg_f},
                 {"beta_R_f0", c.beta * reg_f0}};
  r.finalize();
  return r;
}

template <Predictor F, Predictor F0>
BoundReport theorem1_report(const F& model, const Dataset& source, const Dataset& target,
                            const LaplacianGraph& graph, const F0& f0, double lambda,
                            LossConstants loss = {}) {
  return theorem1_report(model, source.features(), target.features(), graph, f0, lambda, loss);
}

struct Theorem2Constants {
  double C1 = 0.0;
  double C2 = 0.0;
  double kappa = 0.0;
};

// C1 = (L_L/2) * 3 * max{kappa^2, 2/(lambda mu_R)} * max{2/mu_L, 1}
// C2 = 3 L_L / mu_R,  kappa = L_R / mu_R
inline Theorem2Constants theorem2_constants(double L_L, double mu_L, double L_R, double mu_R,
                                            double lambda) {
  Theorem2Constants c;
  c.kappa = L_R / mu_R;
  c.C1 = 0.5 * L_L * 3.0 * std::max(c.kappa * c.kappa, 2.0 / (lambda * mu_R)) *
         std::max(2.0 / mu_L, 1.0);
  c.C2 = 3.0 * L_L / mu_R;
  return c;
}

// C1 = 2 L_L max{2 kappa^2 / mu_L, 2/(lambda mu_R)}
// C2 = 2 L_L max{2/mu_R, kappa^2, 1}
inline Theorem2Constants theorem5_constants(double L_L, double mu_L, double L_R, double mu_R,
                                            double lambda) {
  Theorem2Constants c;
  c.kappa = L_R / mu_R;
  c.C1 = 2.0 * L_L * std::max(2.0 * c.kappa * c.kappa / mu_L, 2.0 / (lambda * mu_R));
  c.C2 = 2.0 * L_L * std::max({2.0 / mu_R, c.kappa * c.kappa, 1.0});
  return c;
}

// Fresh Monte Carlo draws for the population bounds: mc_n points from each
// law, of which the first `pair_cap` source points enter the pair sums.
struct PopulationSample {
  Matrix p;
  Matrix q;
  Eigen::Index pair_rows = 0;
};

inline PopulationSample draw_population_sample(const CovariateShiftSpec& spec, Eigen::Index mc_n,
                                               std::uint64_t seed, Eigen::Index pair_cap) {
  spec.validate();
  SplitMix64 rp(derive_seed(seed, 100));
  SplitMix64 rq(derive_seed(seed, 101));
  PopulationSample s;
  s.p = spec.source_law.sample(rp, mc_n);
  s.q = spec.target_law.sample(rq, mc_n);
  s.pair_rows = std::min(mc_n, pair_cap);
  return s;
}

inline constexpr Eigen::Index kDefaultPairCap = 2000;

namespace bounds_detail {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe half_squared_error(const Vector& a, const Vector& b) {
  const Vector v = 0.5 * (a - b).array().square().matrix();
  return {fairshift::mean(v), standard_error(v)};
}

inline MeanSe squared_error(const Vector& a, const Vector& b) {
  const Vector v = (a - b).array().square().matrix();
  return {fairshift::mean(v), standard_error(v)};
}

// Largest kernel value: 1 for the normalized families.
inline double kernel_max(const KernelSpec&) { return 1.0; }

}  // namespace bounds_detail

// Inductive bound with R(f, g) = E[1/2 (f(X_s) - g(X_t))^2 K], mu_R =
// min over the Q sample of K_Q(x) = E_P K(X, x), L_R = K_max.
template <Predictor F, Predictor F0>
BoundReport theorem2_report(const F& model, const CovariateShiftSpec& spec, const F0& f0,
                            const KernelSpec& kernel, double lambda, Eigen::Index mc_n,
                            std::uint64_t seed, LossConstants loss = {},
                            Eigen::Index pair_cap = kDefaultPairCap) {
  if (mc_n < 1000) throw ValidationError("theorem2_report: mc_n must be >= 1000");
  if (!(lambda > 0.0)) throw ValidationError("theorem2_report: lambda must be > 0");
  const PopulationSample s = draw_population_sample(spec, mc_n, seed, pair_cap);
  const Matrix ps = s.p.topRows(s.pair_rows);
  const Vector fq = model.predict(s.q), f0q = f0.predict(s.q);
  const Vector fp = model.predict(s.p), f0p = f0.predict(s.p);
  const auto lhs = bounds_detail::half_squared_error(fq, f0q);
  const auto src = bounds_detail::half_squared_error(fp, f0p);
  const PairMoments pm = kernel_pair_moments(
      kernel, ps, s.q,
      {{fp.head(s.pair_rows), fq}, {f0p.head(s.pair_rows), f0q}});
  const double mu = pm.kernel_target_means.minCoeff();
  const double lr = bounds_detail::kernel_max(kernel);

  BoundReport r;
  r.theorem = "T2";
  r.inequality =
      "E_Q L(f, f0) <= C1 [E_P L(f, f0) + lambda R(f, f)] + C2 R(f0, f0); "
      "R(f, g) = E[1/2 (f(X_s) - g(X_t))^2 K(X_s, X_t)], mu_R = min_Q K_Q, L_R = K_max; "
      "C1 = (L_L/2) 3 max{kappa^2, 2/(lambda mu_R)} max{2/mu_L, 1}, C2 = 3 L_L/mu_R "
      "(proof-reconstructed)";
  r.seeds = {seed};
  r.lhs = lhs.mean;
  r.quantities = {{"E_P_loss", src.mean},
                  {"R_model", pm.stats[0].mean},
                  {"R_f0", pm.stats[1].mean},
                  {"se_lhs", lhs.se},
                  {"se_E_P_loss", src.se},
                  {"se_R_model", pm.stats[0].standard_error},
                  {"se_R_f0", pm.stats[1].standard_error},
                  {"mc_n", static_cast<double>(mc_n)},
                  {"pair_rows", static_cast<double>(s.pair_rows)}};
  r.constants = {{"mu_R", mu},      {"L_R", lr},          {"mu_L", loss.mu_L},
                 {"L_L", loss.L_L}, {"lambda", lambda}};
  if (!(mu > kDisconnectedThreshold)) {
    r.degenerate = true;
    r.note = "K_Q lower bound ~ 0: mu_R not estimable";
    r.rhs_terms = {{"C1_E_P_loss", 0.0}, {"C1_lambda_R_model", 0.0}, {"C2_R_f0", 0.0}};
    r.finalize();
    return r;
  }
  const Theorem2Constants c = theorem2_constants(loss.L_L, loss.mu_L, lr, mu, lambda);
  r.constants["C1"] = c.C1;
  r.constants["C2"] = c.C2;
  r.constants["kappa"] = c.kappa;
  r.rhs_terms = {{"C1_E_P_loss", c.C1 * src.mean},
                 {"C1_lambda_R_model", c.C1 * lambda * pm.stats[0].mean},
                 {"C2_R_f0", c.C2 * pm.stats[1].mean}};
  const double se_rhs2 = std::pow(c.C1 * src.se, 2) +
                         std::pow(c.C1 * lambda * pm.stats[0].standard_error, 2) +
                         std::pow(c.C2 * pm.stats[1].standard_error, 2);
  r.standard_error = std::sqrt(lhs.se * lhs.se + se_rhs2);
  r.finalize();
  return r;
}

// Non-covariate-shift bound: f_s generates source labels, f_t target ones.
template <Predictor F, Predictor FS, Predictor FT>
BoundReport theorem5_report(const F& model, const FS& f_s, const FT& f_t,
                            const CovariateShiftSpec& spec, const KernelSpec& kernel,
                            double lambda, Eigen::Index mc_n, std::uint64_t seed,
                            LossConstants loss = {}, Eigen::Index pair_cap = kDefaultPairCap) {
  if (mc_n < 1000) throw ValidationError("theorem5_report: mc_n must be >= 1000");
  if (!(lambda > 0.0)) throw ValidationError("theorem5_report: lambda must be > 0");
  const PopulationSample s = draw_population_sample(spec, mc_n, seed, pair_cap);
  const Eigen::Index m = s.pair_rows;
  const Vector fq = model.predict(s.q), fp = model.predict(s.p);
  const Vector fsq = f_s.predict(s.q), fsp = f_s.predict(s.p);
  const Vector ftq = f_t.predict(s.q), ftp = f_t.predict(s.p);
  const auto lhs = bounds_detail::half_squared_error(fq, ftq);
  const auto src = bounds_detail::half_squared_error(fp, fsp);
  const auto gap_p = bounds_detail::squared_error(fsp, ftp);
  const auto gap_q = bounds_detail::squared_error(fsq, ftq);
  const PairMoments pm = kernel_pair_moments(
      kernel, s.p.topRows(m), s.q,
      {{fp.head(m), fq}, {ftp.head(m), ftq}, {fsp.head(m), fsq}});
  const double mu = pm.kernel_target_means.minCoeff();
  const double lr = bounds_detail::kernel_max(kernel);
  const double r_model = pm.stats[0].mean, r_ft = pm.stats[1].mean, r_fs = pm.stats[2].mean;

  BoundReport r;
  r.theorem = "T5";
  r.inequality =
      "E_Q L(f, f_t) <= C1 [E_P L(f, f_s) + lambda R(f)] + C2 min{R(f_t) + ||f_s - f_t||_P^2, "
      "R(f_s) + ||f_s - f_t||_Q^2}; R as in T2; C1 = 2 L_L max{2 kappa^2/mu_L, 2/(lambda mu_R)}, "
      "C2 = 2 L_L max{2/mu_R, kappa^2, 1} (proof-reconstructed)";
  r.seeds = {seed};
  r.lhs = lhs.mean;
  const double variant_p = r_ft + gap_p.mean;
  const double variant_q = r_fs + gap_q.mean;
  const bool use_p = variant_p <= variant_q;
  r.quantities = {{"E_P_loss", src.mean},
                  {"R_model", r_model},
                  {"R_f_t", r_ft},
                  {"R_f_s", r_fs},
                  {"gap_P", gap_p.mean},
                  {"gap_Q", gap_q.mean},
                  {"variant_P", variant_p},
                  {"variant_Q", variant_q},
                  {"se_lhs", lhs.se},
                  {"mc_n", static_cast<double>(mc_n)},
                  {"pair_rows", static_cast<double>(m)}};
  r.constants = {{"mu_R", mu},      {"L_R", lr},          {"mu_L", loss.mu_L},
                 {"L_L", loss.L_L}, {"lambda", lambda}};
  if (!(mu > kDisconnectedThreshold)) {
    r.degenerate = true;
    r.note = "K_Q lower bound ~ 0: mu_R not estimable";
    r.rhs_terms = {{"C1_E_P_loss", 0.0}, {"C1_lambda_R_model", 0.0}, {"C2_min_variant", 0.0}};
    r.finalize();
    return r;
  }
  const Theorem2Constants c = theorem5_constants(loss.L_L, loss.mu_L, lr, mu, lambda);
  r.constants["C1"] = c.C1;
  r.constants["C2"] = c.C2;
  r.constants["kappa"] = c.kappa;
  r.rhs_terms = {{"C1_E_P_loss", c.C1 * src.mean},
                 {"C1_lambda_R_model", c.C1 * lambda * r_model},
                 {"C2_min_variant", c.C2 * std::min(variant_p, variant_q)}};
  const double se_variant =
      use_p ? std::hypot(pm.stats[1].standard_error, gap_p.se)
            : std::hypot(pm.stats[2].standard_error, gap_q.se);
  const double se_rhs2 = std::pow(c.C1 * src.se, 2) +
                         std::pow(c.C1 * lambda * pm.stats[0].standard_error, 2) +
                         std::pow(c.C2 * se_variant, 2);
  r.standard_error = std::sqrt(lhs.se * lhs.se + se_rhs2);
  r.finalize();
  return r;
}

// R(f0, f0) for the domain-generalization bound: exact for step functions,
// projected gradient ascent otherwise.
inline double adversarial_self_regularizer(const RegressionFunction& f0, const Matrix& x,
                                           const AdversaryConfig& cfg) {
  if (f0.kind() == RegressionFunction::Kind::Step) {
    return step_adversarial_sup(f0, x, cfg.budget);
  }
  return adversarial_regularizer(f0, f0, x, cfg).value.value;
}

// Domain generalization over Q_eps = {T#P : E||X - T(X)|| <= eps}, with the
// empirical source sample standing in for P. The sup on the left is
// lower-bounded by the identity map, the learned adversarial displacement
// and n_adversaries random-direction maps at norm exactly eps, so a "holds"
// verdict is necessary but not sufficient.
template <DifferentiablePredictor F>
BoundReport theorem3_report(const F& model, const Matrix& source, const RegressionFunction& f0,
                            const AdversaryConfig& cfg, int n_adversaries, std::uint64_t seed) {
  cfg.validate();
  if (n_adversaries < 1) throw ValidationError("theorem3_report: n_adversaries must be >= 1");
  const Eigen::Index n = source.rows();
  const AdversarialResult learned = adversarial_regularizer(model, model, source, cfg);
  const double r_model = learned.value.value;
  const double r_f0 = adversarial_self_regularizer(f0, source, cfg);
  const double err_p = (model.predict(source) - f0.predict(source)).squaredNorm() /
                       static_cast<double>(n);
  auto shifted_error = [&](const Matrix& delta) {
    const Matrix moved = source + delta;
    return (model.predict(moved) - f0.predict(moved)).squaredNorm() / static_cast<double>(n);
  };
  double sup = err_p;
  double sup_learned = shifted_error(learned.displacements);
  sup = std::max(sup, sup_learned);
  double sup_random = 0.0;
  for (int k = 0; k < n_adversaries; ++k) {
    const Matrix delta = random_directions(derive_seed(seed, static_cast<std::uint64_t>(k)), n,
                                           source.cols(), cfg.budget);
    sup_random = std::max(sup_random, shifted_error(delta));
  }
  sup = std::max(sup, sup_random);

  BoundReport r;
  r.theorem = "T3";
  r.inequality =
      "sup_{Q in Q_eps} E_Q (f - f0)^2 <= 4 [R(f, f) + R(f0, f0) + E_P (f - f0)^2]; "
      "R(f, g) = max_{T in T_eps} E_P (f(X) - g(T(X)))^2; sup lower-bounded by sampled maps";
  r.seeds = {seed, cfg.seed};
  r.lhs = sup;
  r.constants = {{"epsilon", cfg.budget},
                 {"factor", 4.0},
                 {"n_adversaries", static_cast<double>(n_adversaries)},
                 {"n", static_cast<double>(n)}};
  r.quantities = {{"R_model", r_model},
                  {"R_f0", r_f0},
                  {"E_P_sq_error", err_p},
                  {"lhs_identity", err_p},
                  {"lhs_learned", sup_learned},
                  {"lhs_random", sup_random},
                  {"learned_mean_norm", mean_row_norm(learned.displacements)}};
  r.rhs_terms = {{"4_R_model", 4.0 * r_model},
                 {"4_R_f0", 4.0 * r_f0},
                 {"4_E_P_sq_error", 4.0 * err_p}};
  r.note = "sampled sup: holds is necessary, not sufficient";
  r.finalize();
  return r;
}

template <DifferentiablePredictor F>
BoundReport theorem3_report(const F& model, const Dataset& source, const RegressionFunction& f0,
                            const AdversaryConfig& cfg, int n_adversaries, std::uint64_t seed) {
  return theorem3_report(model, source.features(), f0, cfg, n_adversaries, seed);
}

}  // namespace fairshift

#endif  // FAIRSHIFT_BOUNDS_HPP_
