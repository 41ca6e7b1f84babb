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


#ifndef FAIRSHIFT_BATTERY_HPP_
#define FAIRSHIFT_BATTERY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fairshift/alignment.hpp"
#include "fairshift/bounds.hpp"
#include "fairshift/data.hpp"
#include "fairshift/experiment.hpp"
#include "fairshift/extrapolation.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/metrics.hpp"
#include "fairshift/model.hpp"
#include "fairshift/regularizers.hpp"
#include "fairshift/rng.hpp"
#include "fairshift/solver.hpp"

namespace fairshift {

struct CheckResult {
  std::string name;
  std::string description;
  int trials = 0;
  int passed = 0;
  bool ok = false;
  std::map<std::string, double> details;
  std::string note;
};

inline Json to_json(const CheckResult& c) {
  Json j;
  j["name"] = c.name;
  j["description"] = c.description;
  j["trials"] = c.trials;
  j["passed"] = c.passed;
  j["ok"] = c.ok;
  j["details"] = c.details;
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

// `fault` names a check whose reported constants are deliberately corrupted
// (rhs scaled by 1e-6) to exercise the failure path.
struct BatteryOptions {
  std::vector<std::uint64_t> seeds;
  std::string fault;
};

namespace battery_detail {

inline bool at_least_nine_tenths(int passed, int trials) { return 10 * passed >= 9 * trials; }

inline void tamper(BoundReport& r) {
  for (auto& [name, v] : r.rhs_terms) v *= 1e-6;
  r.finalize();
}

inline CovariateShiftSpec one_d_shift(double target_mean, RegressionFunction f0,
                                      std::uint64_t seed) {
  CovariateShiftSpec spec;
  spec.regression_fn = std::move(f0);
  spec.source_law = isotropic_law(Vector::Zero(1), 1.0);
  spec.target_law = isotropic_law(Vector::Constant(1, target_mean), 1.0);
  spec.seed = seed;
  return spec;
}

}  // namespace battery_detail

// Desk-scale factor model: p = 5, k = 2, ||b|| = 1, sigma = 0.1.
inline FactorModelSpec default_factor_model(std::uint64_t seed, bool with_labels = false) {
  FactorModelSpec spec;
  spec.loading = Matrix(5, 2);
  spec.loading << 1, 0, 0, 1, 1, 1, 1, -1, 0.5, 0.5;
  spec.loading *= 0.1;
  spec.protected_direction = Vector::Constant(5, 1.0 / std::sqrt(5.0));
  spec.noise_sd = 0.1;
  spec.u_law = isotropic_law(Vector::Zero(2), 1.0);
  spec.seed = seed;
  if (with_labels) {
    Vector w(2);
    w << 1.0, -1.0;
    spec.labels = FactorLabels{w, 0.5, 0.1};
  }
  return spec;
}

inline CheckResult check_theorem1(const BatteryOptions& o) {
  CheckResult c{"theorem1", "transductive bound: mis-specified linear fit, sine f0, n_s = n_t = 50",
                0, 0, false, {}, ""};
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t s : o.seeds) {
    for (std::uint64_t r = 0; r < 5; ++r) {
      SplitMix64 rng(derive_seed(s, 1000 + r));
      const double mean_t = 0.5 + 2.0 * rng.uniform();
      const double bandwidth = 0.5 + 1.5 * rng.uniform();
      const double freq = 1.0 + 2.0 * rng.uniform();
      const CovariateShiftSpec spec = battery_detail::one_d_shift(
          mean_t, RegressionFunction::sine(freq), derive_seed(s, 1010 + r));
      const auto [src, tgt] = generate_covariate_shift(spec, 50, 50);
      const LaplacianGraph graph = build_graph(src, tgt, KernelSpec::rbf(bandwidth));
      for (double lambda : {0.1, 1.0}) {
        const FitResult fit =
            fit_regularized(src, tgt.without_labels(), ModelSpec::linear(), graph, lambda);
        BoundReport rep = theorem1_report(fit.model, src, tgt, graph, spec.regression_fn, lambda);
        if (o.fault == c.name) battery_detail::tamper(rep);
        ++c.trials;
        c.passed += rep.holds;
        worst = std::min(worst, rep.slack / (1.0 + std::abs(rep.rhs())));
      }
    }
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["min_relative_slack"] = worst;
  return c;
}

inline LaplacianGraph random_graph(std::uint64_t seed, Eigen::Index min_n = 10,
                                   Eigen::Index max_n = 40) {
  SplitMix64 rng(seed);
  const auto span = static_cast<std::uint64_t>(max_n - min_n + 1);
  const Eigen::Index ns = min_n + static_cast<Eigen::Index>(rng.below(span));
  const Eigen::Index nt = min_n + static_cast<Eigen::Index>(rng.below(span));
  const double shift = 2.0 * rng.uniform();
  const double bandwidth = 0.7 + 1.3 * rng.uniform();
  const GaussianLaw p = isotropic_law(Vector::Zero(2), 1.0);
  const GaussianLaw q = isotropic_law(Vector::Constant(2, shift), 1.0);
  return build_graph(p.sample(rng, ns), q.sample(rng, nt), KernelSpec::rbf(bandwidth));
}

inline CheckResult check_lemma1(const BatteryOptions& o) {
  CheckResult c{"lemma1", "extrapolation Lipschitz and distance inequalities, 1000 pairs per graph",
                0, 0, false, {}, ""};
  int violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (std::uint64_t s : o.seeds) {
    for (std::uint64_t g = 0; g < 2; ++g) {
      const LaplacianGraph graph = random_graph(derive_seed(s, 1100 + g));
      const Lemma1Report rep = verify_lemma1(graph, 1000, derive_seed(s, 1110 + g));
      ++c.trials;
      c.passed += rep.holds();
      violations += rep.lipschitz.violations + rep.distance.violations;
      min_slack = std::min({min_slack, rep.lipschitz.min_slack, rep.distance.min_slack});
    }
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["violations"] = violations;
  c.details["min_slack"] = min_slack;
  return c;
}

inline CheckResult check_lemma2(const BatteryOptions& o) {
  CheckResult c{"lemma2", "quadratic-loss strong convexity and Lipschitz inequalities", 0, 0,
                false, {}, ""};
  for (std::uint64_t s : o.seeds) {
    const Lemma2Report rep = verify_lemma2(1000, derive_seed(s, 1200));
    ++c.trials;
    c.passed += rep.holds();
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  return c;
}

inline CheckResult check_extrapolation(const BatteryOptions& o) {
  CheckResult c{"extrapolation", "closed-form extrapolation matches conjugate gradients to 1e-6",
                0, 0, false, {}, ""};
  double worst = 0.0;
  for (std::uint64_t s : o.seeds) {
    for (std::uint64_t g = 0; g < 5; ++g) {
      const LaplacianGraph graph = random_graph(derive_seed(s, 1300 + g));
      SplitMix64 rng(derive_seed(s, 1310 + g));
      Vector v(graph.n_source());
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
      const Vector a = extrapolate_closed_form(graph, v).extended;
      const Vector b = extrapolate_iterative(graph, v).extended;
      const double err = (a - b).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      ++c.trials;
      c.passed += err <= 1e-6;
    }
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["max_abs_difference"] = worst;
  return c;
}

inline CheckResult check_theorem3(const BatteryOptions& o) {
  CheckResult c{"theorem3", "domain-generalization bound, step f0 vs linear fit, eps = 0.3, "
                            "200 sampled adversaries", 0, 0, false, {}, ""};
  double worst = std::numeric_limits<double>::infinity();
  for (std::uint64_t s : o.seeds) {
    const RegressionFunction step = RegressionFunction::step(0.0);
    const CovariateShiftSpec spec = battery_detail::one_d_shift(1.0, step, derive_seed(s, 1400));
    const auto [src, tgt] = generate_covariate_shift(spec, 200, 10);
    AdversaryConfig cfg;
    cfg.budget = 0.3;
    cfg.seed = derive_seed(s, 1401);
    const FitResult fit = fit_adversarial(src, ModelSpec::linear(), cfg, 1.0);
    BoundReport rep = theorem3_report(fit.model, src, step, cfg, 200, derive_seed(s, 1402));
    if (o.fault == c.name) battery_detail::tamper(rep);
    ++c.trials;
    c.passed += rep.holds;
    worst = std::min(worst, rep.slack);
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["min_slack"] = worst;
  return c;
}

inline CheckResult check_population_bound(const BatteryOptions& o, bool general_shift) {
  CheckResult c{general_shift ? "theorem5" : "theorem2",
                general_shift ? "non-covariate-shift bound, Monte Carlo mc_n = 20000"
                              : "inductive bound, Monte Carlo mc_n = 20000",
                0, 0, false, {}, "holds within 3 standard errors"};
  double worst = std::numeric_limits<double>::infinity();
  const std::uint64_t base = general_shift ? 1600 : 1500;
  for (std::uint64_t s : o.seeds) {
    const RegressionFunction fs = RegressionFunction::sine(2.0);
    const RegressionFunction ft = fs.scaled(2.0);
    const CovariateShiftSpec spec = battery_detail::one_d_shift(1.0, fs, derive_seed(s, base));
    const auto [src, tgt] = general_shift ? generate_domains(spec, fs, ft, 100, 100)
                                          : generate_covariate_shift(spec, 100, 100);
    const KernelSpec kernel = KernelSpec::rbf(1.0);
    const LaplacianGraph graph = build_graph(src, tgt, kernel);
    const FitResult fit =
        fit_regularized(src, tgt.without_labels(), ModelSpec::linear(), graph, 1.0);
    BoundReport rep =
        general_shift
            ? theorem5_report(fit.model, fs, ft, spec, kernel, 1.0, 20000, derive_seed(s, base + 1))
            : theorem2_report(fit.model, spec, fs, kernel, 1.0, 20000, derive_seed(s, base + 1));
    if (o.fault == c.name) battery_detail::tamper(rep);
    ++c.trials;
    c.passed += rep.holds;
    worst = std::min(worst, rep.slack / std::max(rep.tolerance, 1e-300));
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["min_slack_over_tolerance"] = worst;
  return c;
}

inline CheckResult check_theorem4(const BatteryOptions& o) {
  CheckResult c{"theorem4", "alignment surrogate: relative ||Phi b|| <= 1e-2 and divergence "
                            "reduced >= 10x, n = 2000 per group, on >= 9/10 seeds",
                0, 0, false, {}, ""};
  double worst_rel = 0.0, worst_red = std::numeric_limits<double>::infinity();
  int direction_violations = 0;
  SinkhornConfig sc;
  for (std::uint64_t s : o.seeds) {
    const FactorModelSpec spec = default_factor_model(derive_seed(s, 1700));
    const Dataset data = generate_factor_model_groups(spec, 2000);
    AlignmentConfig ac;
    ac.seed = derive_seed(s, 1701);
    const AlignmentFit fit = fit_alignment(data, 2, sc, ac);
    const double threshold = o.fault == c.name ? 1e-8 : 1e-2;
    const BoundReport rep =
        verify_theorem4(fit.map, spec, 2000, derive_seed(s, 1702), sc, &fit.trace, threshold);
    const double red = rep.quantities.at("divergence_reduction");
    const double rel0 = rep.quantities.at("initial_relative_phi_b");
    ++c.trials;
    c.passed += rep.holds && red >= 10.0;
    if (red > 10.0 && !(rep.lhs < rel0)) ++direction_violations;
    worst_rel = std::max(worst_rel, rep.lhs);
    worst_red = std::min(worst_red, red);
  }
  c.ok = c.trials > 0 && battery_detail::at_least_nine_tenths(c.passed, c.trials) &&
         direction_violations == 0;
  c.details["max_relative_phi_b"] = worst_rel;
  c.details["min_divergence_reduction"] = worst_red;
  c.details["direction_violations"] = direction_violations;
  return c;
}

inline CheckResult check_if_beats_erm(const BatteryOptions& o) {
  CheckResult c{"if_beats_erm", "Laplacian-regularized fit beats ERM on target MSE at the best "
                                "lambda in {0.1, 1, 10}, on >= 9/10 seeds",
                0, 0, false, {}, ""};
  double mean_gain = 0.0;
  for (std::uint64_t s : o.seeds) {
    const CovariateShiftSpec spec =
        battery_detail::one_d_shift(2.0, RegressionFunction::sine(2.0), derive_seed(s, 1800));
    const auto [src, tgt] = generate_covariate_shift(spec, 200, 200);
    const FitResult erm = fit_erm(src, ModelSpec::linear());
    const double base = experiment_detail::target_mse(erm.model, tgt);
    const LaplacianGraph graph = build_graph(src, tgt, KernelSpec::rbf(1.0));
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : {0.1, 1.0, 10.0}) {
      const FitResult fit =
          fit_regularized(src, tgt.without_labels(), ModelSpec::linear(), graph, lambda);
      best = std::min(best, experiment_detail::target_mse(fit.model, tgt));
    }
    ++c.trials;
    c.passed += best < base;
    mean_gain += (base - best) / static_cast<double>(o.seeds.size());
  }
  c.ok = c.trials > 0 && battery_detail::at_least_nine_tenths(c.passed, c.trials);
  c.details["mean_target_mse_gain"] = mean_gain;
  return c;
}

inline CheckResult check_prediction_consistency(const BatteryOptions& o) {
  CheckResult c{"prediction_consistency", "classifier on aligned features is more consistent "
                                         "under the protected flip than on raw features, "
                                         "on >= 9/10 seeds",
                0, 0, false, {}, ""};
  double raw_sum = 0.0, aligned_sum = 0.0;
  SinkhornConfig sc;
  for (std::uint64_t s : o.seeds) {
    const FactorModelSpec spec = default_factor_model(derive_seed(s, 1900), true);
    const Dataset train = generate_factor_model_groups(spec, 2000);
    FactorModelSpec test_spec = spec;
    test_spec.seed = derive_seed(s, 1901);
    const Dataset test = generate_factor_model_groups(test_spec, 2000);
    AlignmentConfig ac;
    ac.seed = derive_seed(s, 1902);
    const AlignmentFit fit = fit_alignment(train, 2, sc, ac);
    const Model raw = experiment_detail::fit_sign_classifier(train.features(), train.labels());
    const Model inner =
        experiment_detail::fit_sign_classifier(fit.map.apply(train.features()), train.labels());
    const Composed<Model> aligned(inner, fit.map.matrix());
    const double pc_raw = prediction_consistency(raw, test, spec.protected_direction).classification;
    const double pc_aligned =
        prediction_consistency(aligned, test, spec.protected_direction).classification;
    ++c.trials;
    c.passed += pc_aligned > pc_raw;
    raw_sum += pc_raw;
    aligned_sum += pc_aligned;
  }
  c.ok = c.trials > 0 && battery_detail::at_least_nine_tenths(c.passed, c.trials);
  c.details["mean_consistency_raw"] = raw_sum / static_cast<double>(o.seeds.size());
  c.details["mean_consistency_aligned"] = aligned_sum / static_cast<double>(o.seeds.size());
  return c;
}

inline CheckResult check_gradients(const BatteryOptions& o, const std::string& which) {
  CheckResult c{"gradient_" + which,
                which + " gradient vs central differences, max relative error < 1e-4", 0, 0,
                false, {}, ""};
  double worst = 0.0;
  for (std::uint64_t s : o.seeds) {
    for (std::uint64_t k = 0; k < 2; ++k) {
      const std::uint64_t seed = derive_seed(s, 2000 + k);
      SplitMix64 rng(seed);
      double err = 0.0;
      if (which == "laplacian") {
        const LaplacianGraph graph = random_graph(seed, 5, 15);
        Vector f(graph.size());
        for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = rng.normal();
        err = laplacian_gradient_check(graph, f);
      } else if (which == "adversarial") {
        const Matrix x = isotropic_law(Vector::Zero(2), 1.0).sample(rng, 10);
        Vector w(2);
        w << rng.normal(), rng.normal();
        const Model f(ModelSpec::linear(), (Vector(3) << 0.1, w).finished());
        const RegressionFunction g = RegressionFunction::sine(1.0 + rng.uniform(), 1.0, 0);
        const Matrix delta = random_directions(derive_seed(seed, 1), 10, 2, 0.3);
        err = adversarial_gradient_check(f, g, x, delta);
      } else {
        const FactorModelSpec spec = default_factor_model(seed);
        const GroupSplit g = split_by_protected(generate_factor_model_groups(spec, 30));
        const Matrix phi = random_orthonormal_rows(2, 5, derive_seed(seed, 2));
        SinkhornConfig tight;
        tight.tol = 1e-14;
        tight.max_iters = 20000;
        err = sinkhorn_gradient_check(phi, g.protected_group, g.reference_group, tight);
      }
      worst = std::max(worst, err);
      ++c.trials;
      c.passed += err < 1e-4;
    }
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  c.details["max_relative_error"] = worst;
  return c;
}

inline CheckResult check_sinkhorn_properties(const BatteryOptions& o) {
  CheckResult c{"sinkhorn_properties", "Sinkhorn divergence: zero on identical clouds, "
                                       "symmetric, nonnegative, permutation invariant",
                0, 0, false, {}, ""};
  SinkhornConfig cfg;
  cfg.blur = 0.5;
  for (std::uint64_t s : o.seeds) {
    SplitMix64 rng(derive_seed(s, 2100));
    const Matrix x = isotropic_law(Vector::Zero(3), 1.0).sample(rng, 40);
    const Matrix y = isotropic_law(Vector::Constant(3, 0.5), 1.0).sample(rng, 50);
    Matrix y_perm = y;
    for (Eigen::Index i = y.rows() - 1; i > 0; --i) {
      y_perm.row(i).swap(y_perm.row(static_cast<Eigen::Index>(rng.below(i + 1))));
    }
    const double self = sinkhorn_divergence(x, x, cfg);
    const double xy = sinkhorn_divergence(x, y, cfg);
    const double yx = sinkhorn_divergence(y, x, cfg);
    const double perm = sinkhorn_divergence(x, y_perm, cfg);
    const bool ok = std::abs(self) <= 1e-8 && std::abs(xy - yx) <= 1e-10 * (1.0 + xy) &&
                    xy >= -1e-9 && std::abs(perm - xy) <= 1e-10 * (1.0 + xy);
    ++c.trials;
    c.passed += ok;
  }
  c.ok = c.trials > 0 && c.passed == c.trials;
  return c;
}

// Five smooth models on P = N(0, 1), Q = N(1, 1): the sample regularizer at
// n_s = n_t = 1000 against Gauss-Hermite quadrature of R(f, f).
inline CheckResult check_convergence(const BatteryOptions& o) {
  CheckResult c{"convergence", "sample regularizer within 10% of R(f, f) at n_s = n_t = 1000 "
                               "for 5 smooth models",
                0, 0, false, {}, ""};
  const std::uint64_t s = o.seeds.empty() ? 0 : o.seeds.front();
  const GaussianLaw p = isotropic_law(Vector::Zero(1), 1.0);
  const GaussianLaw q = isotropic_law(Vector::Constant(1, 1.0), 1.0);
  const KernelSpec kernel = KernelSpec::rbf(1.0);
  const std::vector<RegressionFunction> models = {
      RegressionFunction::linear(Vector::Constant(1, 1.0)), RegressionFunction::sine(1.0),
      RegressionFunction::sine(2.0, 0.5), RegressionFunction::quadratic(0.5),
      RegressionFunction::linear(Vector::Constant(1, -2.0), 1.0)};
  double worst = 0.0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    SplitMix64 rng(derive_seed(s, 2200 + m));
    const Matrix xs = p.sample(rng, 1000);
    const Matrix xt = q.sample(rng, 1000);
    const double sample = population_kernel_regularizer(models[m], models[m], xs, xt, kernel).value;
    const double exact = gaussian_quadrature_regularizer(models[m], models[m], p, q, kernel);
    const double gap = std::abs(sample - exact) / exact;
    worst = std::max(worst, gap);
    ++c.trials;
    c.passed += gap <= 0.1;
  }
  c.ok = c.passed == c.trials;
  c.details["max_relative_gap"] = worst;
  return c;
}

struct BatteryEntry {
  std::string name;
  std::function<CheckResult(const BatteryOptions&)> run;
};

inline std::vector<BatteryEntry> battery_entries() {
  return {
      {"lemma1", check_lemma1},
      {"lemma2", check_lemma2},
      {"extrapolation", check_extrapolation},
      {"theorem1", check_theorem1},
      {"theorem2", [](const BatteryOptions& o) { return check_population_bound(o, false); }},
      {"theorem3", check_theorem3},
      {"theorem4", check_theorem4},
      {"theorem5", [](const BatteryOptions& o) { return check_population_bound(o, true); }},
      {"if_beats_erm", check_if_beats_erm},
      {"prediction_consistency", check_prediction_consistency},
      {"gradient_laplacian", [](const BatteryOptions& o) { return check_gradients(o, "laplacian"); }},
      {"gradient_adversarial",
       [](const BatteryOptions& o) { return check_gradients(o, "adversarial"); }},
      {"gradient_sinkhorn", [](const BatteryOptions& o) { return check_gradients(o, "sinkhorn"); }},
      {"sinkhorn_properties", check_sinkhorn_properties},
      {"convergence", check_convergence},
  };
}

// Names accepted by BatteryOptions::fault.
inline std::vector<std::string> fault_targets() {
  return {"theorem1", "theorem2", "theorem3", "theorem4", "theorem5"};
}

// Runs every check; `on_done` sees each result as it finishes. A check that
// throws is recorded as failed with the error message.
inline std::vector<CheckResult> run_battery(
    const BatteryOptions& o,
    const std::function<void(const CheckResult&)>& on_done = nullptr) {
  std::vector<CheckResult> out;
  for (const BatteryEntry& e : battery_entries()) {
    CheckResult r;
    try {
      r = e.run(o);
    } catch (const std::exception& ex) {
      r.name = e.name;
      r.ok = false;
      r.note = std::string("error: ") + ex.what();
    }
    if (on_done) on_done(r);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string battery_table(const std::vector<CheckResult>& results) {
  std::string s = "check,passed,trials,ok\n";
  for (const CheckResult& r : results) {
    s += r.name + "," + std::to_string(r.passed) + "," + std::to_string(r.trials) + "," +
         (r.ok ? "pass" : "FAIL") + "\n";
  }
  return s;
}

inline Json battery_json(const BatteryOptions& o, const std::vector<CheckResult>& results) {
  Json j;
  j["seeds"] = o.seeds;
  j["checks"] = Json::array();
  bool all = true;
  for (const CheckResult& r : results) {
    j["checks"].push_back(to_json(r));
    all = all && r.ok;
  }
  j["all_passed"] = all;
  return j;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_BATTERY_HPP_
