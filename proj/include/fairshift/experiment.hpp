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


#ifndef FAIRSHIFT_EXPERIMENT_HPP_
#define FAIRSHIFT_EXPERIMENT_HPP_

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fairshift/alignment.hpp"
#include "fairshift/bounds.hpp"
#include "fairshift/csv.hpp"
#include "fairshift/data.hpp"
#include "fairshift/errors.hpp"
#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/metrics.hpp"
#include "fairshift/model.hpp"
#include "fairshift/solver.hpp"

namespace fairshift {

enum class ExperimentKind {
  TransductiveT1,
  InductiveT2,
  DomgenT3,
  GeneralShiftT5,
  AlignmentT4,
  ErmVsIfSweep
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::TransductiveT1: return "transductive_t1";
    case ExperimentKind::InductiveT2: return "inductive_t2";
    case ExperimentKind::DomgenT3: return "domgen_t3";
    case ExperimentKind::GeneralShiftT5: return "general_shift_t5";
    case ExperimentKind::AlignmentT4: return "alignment_t4";
    case ExperimentKind::ErmVsIfSweep: return "erm_vs_if_sweep";
  }
  return "unknown";
}

struct CovariateShiftData {
  CovariateShiftSpec spec;
  // Labels on the target domain come from this function when set.
  std::optional<RegressionFunction> target_regression_fn;
  Eigen::Index n_source = 50;
  Eigen::Index n_target = 50;
};

struct FactorModelData {
  FactorModelSpec spec;
  Eigen::Index n_per_group = 2000;
  bool paired_u = false;
};

struct AdversaryOptions {
  AdversaryConfig config;
  int n_adversaries = 200;
  int outer_iterations = 100;
};

struct AlignmentOptions {
  AlignmentConfig config;
  Eigen::Index q = 1;
  double threshold = 1e-2;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::TransductiveT1;
  std::variant<CovariateShiftData, FactorModelData> data;
  KernelSpec kernel = KernelSpec::rbf(1.0);
  ModelSpec model = ModelSpec::linear();
  std::vector<double> lambdas = {1.0};
  std::optional<AdversaryOptions> adversary;
  SinkhornConfig sinkhorn;
  AlignmentOptions alignment;
  Eigen::Index mc_n = 20000;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "fairshift_out";

  const CovariateShiftData& covariate_shift() const { return std::get<CovariateShiftData>(data); }
  const FactorModelData& factor_model() const { return std::get<FactorModelData>(data); }
};

namespace config_detail {

inline void check_keys(const Json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError(path + "." + it.key() + ": unknown field");
    }
  }
}

inline void check_kernel_keys(const Json& k, const std::string& path) {
  if (!k.is_object()) return;
  check_keys(k, path, {"family", "bandwidth", "unit", "metric"});
  if (k.contains("metric") && k["metric"].is_object()) {
    check_keys(k["metric"], path + ".metric", {"kind", "projection", "remove_directions"});
  }
}

inline void check_model_keys(const Json& m, const std::string& path) {
  if (!m.is_object()) return;
  check_keys(m, path, {"family", "ridge", "feature_map", "kernel"});
  if (m.contains("kernel")) check_kernel_keys(m["kernel"], path + ".kernel");
}

inline const Json& object_at(const Json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key)) throw ValidationError(path + "." + key + ": required field missing");
  const Json& v = j[key];
  if (!v.is_object()) throw ValidationError(path + "." + key + ": expected an object");
  return v;
}

inline double number(const Json& j, const std::string& key, const std::string& path,
                     double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ValidationError(path + "." + key + ": expected a number");
  return j[key].get<double>();
}

inline double positive(const Json& j, const std::string& key, const std::string& path,
                       double fallback) {
  const double v = number(j, key, path, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(path + "." + key + ": must be a positive finite number");
  }
  return v;
}

inline std::int64_t integer(const Json& j, const std::string& key, const std::string& path,
                            std::int64_t fallback, std::int64_t min_value) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) {
    throw ValidationError(path + "." + key + ": expected an integer");
  }
  const std::int64_t v = j[key].get<std::int64_t>();
  if (v < min_value) {
    throw ValidationError(path + "." + key + ": must be >= " + std::to_string(min_value));
  }
  return v;
}

inline GaussianLaw law_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  check_keys(j, path, {"mean", "covariance", "sd"});
  if (!j.contains("mean")) throw ValidationError(path + ".mean: required field missing");
  Vector m = vector_from_json(j["mean"], path + ".mean");
  if (m.size() == 0) throw ValidationError(path + ".mean: must be non-empty");
  if (j.contains("covariance") && j.contains("sd")) {
    throw ValidationError(path + ": give either 'covariance' or 'sd', not both");
  }
  GaussianLaw law;
  if (j.contains("covariance")) {
    law = GaussianLaw{m, matrix_from_json(j["covariance"], path + ".covariance")};
  } else {
    law = isotropic_law(m, positive(j, "sd", path, 1.0));
  }
  try {
    law.validate(path);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(e.what()));
  }
  return law;
}

inline RegressionFunction regression_fn_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  check_keys(j, path, {"kind", "frequency", "amplitude", "coordinate", "threshold", "coefficient",
                       "weights", "intercept", "scale", "offset"});
  const std::string kind = j.value("kind", std::string("sine"));
  const int coord = static_cast<int>(integer(j, "coordinate", path, 0, 0));
  RegressionFunction f = RegressionFunction::sine(2.0);
  if (kind == "sine") {
    f = RegressionFunction::sine(number(j, "frequency", path, 2.0),
                                 number(j, "amplitude", path, 1.0), coord);
  } else if (kind == "step") {
    f = RegressionFunction::step(number(j, "threshold", path, 0.0),
                                 number(j, "amplitude", path, 1.0), coord);
  } else if (kind == "quadratic") {
    f = RegressionFunction::quadratic(number(j, "coefficient", path, 1.0), coord);
  } else if (kind == "linear") {
    if (!j.contains("weights")) throw ValidationError(path + ".weights: required for linear");
    f = RegressionFunction::linear(vector_from_json(j["weights"], path + ".weights"),
                                   number(j, "intercept", path, 0.0));
  } else {
    throw ValidationError(path + ".kind: unknown regression function '" + kind + "'");
  }
  if (j.contains("scale")) f = f.scaled(number(j, "scale", path, 1.0));
  if (j.contains("offset")) f = f.shifted(number(j, "offset", path, 0.0));
  return f;
}

inline Json to_json(const RegressionFunction& f) {
  Json j;
  switch (f.kind()) {
    case RegressionFunction::Kind::Sine:
      j = {{"kind", "sine"}, {"frequency", f.frequency()}, {"amplitude", f.amplitude()},
           {"coordinate", f.coordinate()}};
      break;
    case RegressionFunction::Kind::Step:
      j = {{"kind", "step"}, {"threshold", f.threshold()}, {"amplitude", f.amplitude()},
           {"coordinate", f.coordinate()}};
      break;
    case RegressionFunction::Kind::Quadratic:
      j = {{"kind", "quadratic"}, {"coefficient", f.amplitude()}, {"coordinate", f.coordinate()}};
      break;
    case RegressionFunction::Kind::Linear:
      j = {{"kind", "linear"}, {"weights", fairshift::to_json(f.weights())},
           {"intercept", f.intercept()}};
      break;
  }
  j["scale"] = f.scale();
  j["offset"] = f.offset();
  return j;
}

inline CovariateShiftData covariate_shift_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"kind", "regression_fn", "target_regression_fn", "source_law",
                       "target_law", "noise_sd_source", "noise_sd_target", "n_source",
                       "n_target", "protected_coordinate"});
  CovariateShiftData d;
  if (j.contains("regression_fn")) {
    d.spec.regression_fn = regression_fn_from_json(j["regression_fn"], path + ".regression_fn");
  }
  if (j.contains("target_regression_fn")) {
    d.target_regression_fn =
        regression_fn_from_json(j["target_regression_fn"], path + ".target_regression_fn");
  }
  d.spec.source_law = law_from_json(object_at(j, "source_law", path), path + ".source_law");
  d.spec.target_law = law_from_json(object_at(j, "target_law", path), path + ".target_law");
  if (d.spec.source_law.dim() != d.spec.target_law.dim()) {
    throw ValidationError(path + ".target_law: dimension differs from source_law");
  }
  d.spec.noise_sd_source = number(j, "noise_sd_source", path, 0.1);
  d.spec.noise_sd_target = number(j, "noise_sd_target", path, 0.1);
  if (d.spec.noise_sd_source < 0.0) throw ValidationError(path + ".noise_sd_source: must be >= 0");
  if (d.spec.noise_sd_target < 0.0) throw ValidationError(path + ".noise_sd_target: must be >= 0");
  d.n_source = integer(j, "n_source", path, 50, 2);
  d.n_target = integer(j, "n_target", path, 50, 1);
  if (j.contains("protected_coordinate")) {
    d.spec.protected_coordinate =
        static_cast<int>(integer(j, "protected_coordinate", path, 0, 0));
  }
  const Eigen::Index p = d.spec.source_law.dim();
  auto check_fn = [&](const RegressionFunction& f, const std::string& field) {
    try {
      f.check_dimension(p);
    } catch (const ValidationError& e) {
      throw ValidationError(path + "." + field + ": " + e.what());
    }
  };
  check_fn(d.spec.regression_fn, "regression_fn");
  if (d.target_regression_fn) check_fn(*d.target_regression_fn, "target_regression_fn");
  if (d.spec.protected_coordinate && *d.spec.protected_coordinate >= p) {
    throw ValidationError(path + ".protected_coordinate: out of range");
  }
  return d;
}

inline FactorModelData factor_model_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"kind", "loading", "protected_direction", "noise_sd", "u_law",
                       "n_per_group", "labels", "paired_u"});
  FactorModelData d;
  if (!j.contains("loading")) throw ValidationError(path + ".loading: required field missing");
  d.spec.loading = matrix_from_json(j["loading"], path + ".loading");
  if (!j.contains("protected_direction")) {
    throw ValidationError(path + ".protected_direction: required field missing");
  }
  d.spec.protected_direction =
      vector_from_json(j["protected_direction"], path + ".protected_direction");
  d.spec.noise_sd = number(j, "noise_sd", path, 0.1);
  if (j.contains("u_law")) {
    d.spec.u_law = law_from_json(j["u_law"], path + ".u_law");
  } else {
    d.spec.u_law = isotropic_law(Vector::Zero(d.spec.loading.cols()), 1.0);
  }
  d.n_per_group = integer(j, "n_per_group", path, 2000, 2);
  if (j.contains("paired_u")) {
    if (!j["paired_u"].is_boolean()) throw ValidationError(path + ".paired_u: expected a boolean");
    d.paired_u = j["paired_u"].get<bool>();
  }
  if (j.contains("labels")) {
    const Json& l = j["labels"];
    const std::string lp = path + ".labels";
    if (!l.is_object()) throw ValidationError(lp + ": expected an object");
    check_keys(l, lp, {"weights", "bias", "noise_sd"});
    if (!l.contains("weights")) throw ValidationError(lp + ".weights: required field missing");
    d.spec.labels = FactorLabels{vector_from_json(l["weights"], lp + ".weights"),
                                 number(l, "bias", lp, 0.0), number(l, "noise_sd", lp, 0.0)};
  }
  try {
    d.spec.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return d;
}

}  // namespace config_detail

// Parses and validates a config document; errors name the offending field
// path, e.g. "config.solver.lambda: must be > 0".
inline ExperimentConfig parse_config(const Json& j) {
  using namespace config_detail;
  const std::string root = "config";
  if (!j.is_object()) throw ValidationError(root + ": expected a JSON object");
  check_keys(j, root, {"experiment", "data", "kernel", "solver", "adversary", "sinkhorn",
                       "alignment", "mc_n", "seeds", "output_dir"});
  ExperimentConfig c;
  if (!j.contains("experiment") || !j["experiment"].is_string()) {
    throw ValidationError(root + ".experiment: required string field");
  }
  const std::string name = j["experiment"].get<std::string>();
  bool known = false;
  for (ExperimentKind k : {ExperimentKind::TransductiveT1, ExperimentKind::InductiveT2,
                           ExperimentKind::DomgenT3, ExperimentKind::GeneralShiftT5,
                           ExperimentKind::AlignmentT4, ExperimentKind::ErmVsIfSweep}) {
    if (name == to_string(k)) {
      c.experiment = k;
      known = true;
    }
  }
  if (!known) throw ValidationError(root + ".experiment: unknown experiment '" + name + "'");

  const Json& data = object_at(j, "data", root);
  const std::string dkind = data.value("kind", std::string("covariate_shift"));
  const bool wants_factor = c.experiment == ExperimentKind::AlignmentT4;
  if (dkind == "covariate_shift") {
    if (wants_factor) {
      throw ValidationError(root + ".data.kind: alignment_t4 requires 'factor_model'");
    }
    c.data = covariate_shift_from_json(data, root + ".data");
  } else if (dkind == "factor_model") {
    if (!wants_factor) {
      throw ValidationError(root + ".data.kind: " + name + " requires 'covariate_shift'");
    }
    c.data = factor_model_from_json(data, root + ".data");
  } else {
    throw ValidationError(root + ".data.kind: unknown data kind '" + dkind + "'");
  }
  if (c.experiment == ExperimentKind::GeneralShiftT5 &&
      !c.covariate_shift().target_regression_fn) {
    throw ValidationError(root + ".data.target_regression_fn: required by general_shift_t5");
  }

  if (j.contains("kernel")) {
    check_kernel_keys(j["kernel"], root + ".kernel");
    c.kernel = kernel_from_json(j["kernel"], root + ".kernel");
  }

  if (j.contains("solver")) {
    const Json& s = j["solver"];
    const std::string sp = root + ".solver";
    if (!s.is_object()) throw ValidationError(sp + ": expected an object");
    check_keys(s, sp, {"model", "lambda", "lambdas"});
    if (s.contains("model")) {
      check_model_keys(s["model"], sp + ".model");
      c.model = model_spec_from_json(s["model"], sp + ".model");
      try {
        c.model.validate();
      } catch (const ValidationError& e) {
        throw ValidationError(sp + ".model: " + e.what());
      }
    }
    if (s.contains("lambda") && s.contains("lambdas")) {
      throw ValidationError(sp + ": give either 'lambda' or 'lambdas', not both");
    }
    if (s.contains("lambdas")) {
      const Vector l = vector_from_json(s["lambdas"], sp + ".lambdas");
      if (l.size() == 0) throw ValidationError(sp + ".lambdas: must be non-empty");
      c.lambdas.assign(l.data(), l.data() + l.size());
    } else if (s.contains("lambda")) {
      c.lambdas = {number(s, "lambda", sp, 1.0)};
    }
    for (std::size_t i = 0; i < c.lambdas.size(); ++i) {
      const bool zero_ok = c.experiment == ExperimentKind::ErmVsIfSweep;
      const double l = c.lambdas[i];
      if (!std::isfinite(l) || l < 0.0 || (!zero_ok && l == 0.0)) {
        throw ValidationError(sp + (s.contains("lambdas") ? ".lambdas[" + std::to_string(i) + "]"
                                                          : std::string(".lambda")) +
                              (zero_ok ? ": must be >= 0" : ": must be > 0"));
      }
    }
    if (c.experiment != ExperimentKind::ErmVsIfSweep && c.lambdas.size() != 1) {
      throw ValidationError(sp + ".lambdas: only erm_vs_if_sweep accepts a lambda sweep");
    }
  }

  if (j.contains("adversary")) {
    const Json& a = j["adversary"];
    const std::string ap = root + ".adversary";
    if (!a.is_object()) throw ValidationError(ap + ": expected an object");
    check_keys(a, ap, {"budget", "steps", "step_size", "penalty_weight", "seed", "n_adversaries",
                       "outer_iterations"});
    AdversaryOptions o;
    o.config.budget = number(a, "budget", ap, 0.3);
    if (!(o.config.budget >= 0.0)) throw ValidationError(ap + ".budget: must be >= 0");
    o.config.steps = static_cast<int>(integer(a, "steps", ap, 50, 1));
    o.config.step_size = positive(a, "step_size", ap, 0.1);
    o.config.penalty_weight = positive(a, "penalty_weight", ap, 1.0);
    o.config.seed = static_cast<std::uint64_t>(integer(a, "seed", ap, 0, 0));
    o.n_adversaries = static_cast<int>(integer(a, "n_adversaries", ap, 200, 1));
    o.outer_iterations = static_cast<int>(integer(a, "outer_iterations", ap, 100, 1));
    c.adversary = o;
  }
  if (c.experiment == ExperimentKind::DomgenT3 && !c.adversary) {
    throw ValidationError(root + ".adversary: required by domgen_t3");
  }

  if (j.contains("sinkhorn")) {
    const Json& s = j["sinkhorn"];
    const std::string sp = root + ".sinkhorn";
    if (!s.is_object()) throw ValidationError(sp + ": expected an object");
    check_keys(s, sp, {"blur", "max_iters", "tol"});
    c.sinkhorn.blur = positive(s, "blur", sp, 1.0);
    c.sinkhorn.max_iters = static_cast<int>(integer(s, "max_iters", sp, 2000, 1));
    c.sinkhorn.tol = positive(s, "tol", sp, 1e-10);
  }

  if (j.contains("alignment")) {
    const Json& a = j["alignment"];
    const std::string ap = root + ".alignment";
    if (!a.is_object()) throw ValidationError(ap + ": expected an object");
    check_keys(a, ap, {"q", "steps", "step_size", "penalty", "rel_tol", "grad_tol", "seed",
                       "threshold"});
    c.alignment.q = integer(a, "q", ap, 1, 1);
    c.alignment.config.steps = static_cast<int>(integer(a, "steps", ap, 200, 0));
    c.alignment.config.step_size = positive(a, "step_size", ap, 0.5);
    c.alignment.config.penalty = positive(a, "penalty", ap, 1.0);
    c.alignment.config.rel_tol = number(a, "rel_tol", ap, 1e-9);
    c.alignment.config.grad_tol = number(a, "grad_tol", ap, 1e-4);
    if (c.alignment.config.rel_tol < 0.0) throw ValidationError(ap + ".rel_tol: must be >= 0");
    if (c.alignment.config.grad_tol < 0.0) throw ValidationError(ap + ".grad_tol: must be >= 0");
    c.alignment.config.seed = static_cast<std::uint64_t>(integer(a, "seed", ap, 0, 0));
    c.alignment.threshold = positive(a, "threshold", ap, 1e-2);
  }
  if (wants_factor && c.alignment.q >= c.factor_model().spec.p()) {
    throw ValidationError(root + ".alignment.q: must be < p = " +
                          std::to_string(c.factor_model().spec.p()));
  }

  c.mc_n = integer(j, "mc_n", root, 20000, 1000);

  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    if (!s.is_array() || s.empty()) {
      throw ValidationError(root + ".seeds: expected a non-empty array of integers");
    }
    c.seeds.clear();
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::string p = root + ".seeds[" + std::to_string(i) + "]";
      if (s[i].is_number_unsigned()) {
        c.seeds.push_back(s[i].get<std::uint64_t>());
      } else if (s[i].is_number_integer() && s[i].get<std::int64_t>() >= 0) {
        c.seeds.push_back(static_cast<std::uint64_t>(s[i].get<std::int64_t>()));
      } else {
        throw ValidationError(p + ": expected a non-negative 64-bit integer");
      }
      if (!seen.insert(c.seeds.back()).second) throw ValidationError(p + ": duplicate seed");
    }
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string() || j["output_dir"].get<std::string>().empty()) {
      throw ValidationError(root + ".output_dir: expected a non-empty string");
    }
    c.output_dir = j["output_dir"].get<std::string>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

// Relative paths resolve under $FAIRSHIFT_OUTPUT_ROOT when it is set.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  const std::filesystem::path p(dir);
  const char* root = std::getenv("FAIRSHIFT_OUTPUT_ROOT");
  if (p.is_relative() && root && *root) return std::filesystem::path(root) / p;
  return p;
}

// Exit status of `run`, `gen-data` and `report`.
enum ExitCode : int { kExitOk = 0, kExitBoundFailed = 1, kExitConfig = 2, kExitNumeric = 3 };

struct RunOutcome {
  int exit_code = kExitOk;
  std::vector<std::string> messages;
  std::vector<std::filesystem::path> files;
};

namespace experiment_detail {

inline std::string num(double v) { return csv_detail::format_double(v); }

inline void write_text(const std::filesystem::path& path, const std::string& text,
                       RunOutcome& out) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw ValidationError("write failed for '" + path.string() + "'");
  out.files.push_back(path);
}

inline void write_json(const std::filesystem::path& path, const Json& j, RunOutcome& out) {
  write_text(path, j.dump(2) + "\n", out);
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& d, RunOutcome& out) {
  save_csv(d, path.string());
  out.files.push_back(path);
}

// Header plus rows, all cells already formatted.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string str() const {
    std::ostringstream s;
    for (std::size_t i = 0; i < columns.size(); ++i) s << (i ? "," : "") << columns[i];
    s << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
      s << '\n';
    }
    return s.str();
  }
};

inline double target_mse(const Model& m, const Dataset& target) {
  return (m.predict(target.features()) - target.labels()).squaredNorm() /
         static_cast<double>(target.rows());
}

struct SeedContext {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  std::filesystem::path dir;
  RunOutcome& out;
  Table& summary;
  bool data_only;
};

inline std::pair<Dataset, Dataset> covariate_domains(const ExperimentConfig& cfg,
                                                     std::uint64_t seed) {
  const CovariateShiftData& d = cfg.covariate_shift();
  CovariateShiftSpec spec = d.spec;
  spec.seed = seed;
  if (d.target_regression_fn) {
    return generate_domains(spec, spec.regression_fn, *d.target_regression_fn, d.n_source,
                            d.n_target);
  }
  return generate_covariate_shift(spec, d.n_source, d.n_target);
}

inline void record_bound(SeedContext& ctx, const std::string& file, const BoundReport& r) {
  write_json(ctx.dir / file, to_json(r), ctx.out);
  if (!r.holds && !r.degenerate) {
    ctx.out.exit_code = std::max(ctx.out.exit_code, static_cast<int>(kExitBoundFailed));
    ctx.out.messages.push_back("seed " + std::to_string(ctx.seed) + ": " + r.theorem +
                               " bound fails (" + r.inequality + "), slack " + num(r.slack));
  }
}

inline std::vector<std::string> bound_row(const std::string& seed, double lambda,
                                          const BoundReport& r, const FitReport& fit,
                                          double mse) {
  return {seed,          num(lambda),   r.theorem, num(r.lhs),      num(r.rhs()),
          num(r.slack),  r.verdict(),   num(fit.train_loss), num(fit.objective), num(mse)};
}

inline const std::vector<std::string> kBoundColumns = {
    "seed", "lambda", "theorem", "lhs", "rhs", "slack", "verdict", "train_loss", "objective",
    "target_mse"};

inline void run_covariate_seed(SeedContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const auto [source, target] = covariate_domains(cfg, ctx.seed);
  write_dataset(ctx.dir / "data_source.csv", source, ctx.out);
  write_dataset(ctx.dir / "data_target.csv", target, ctx.out);
  if (ctx.data_only) return;
  const std::string seed = std::to_string(ctx.seed);
  const RegressionFunction& f0 = cfg.covariate_shift().spec.regression_fn;
  const double lambda = cfg.lambdas.front();

  switch (cfg.experiment) {
    case ExperimentKind::TransductiveT1:
    case ExperimentKind::InductiveT2:
    case ExperimentKind::GeneralShiftT5: {
      const LaplacianGraph graph = build_graph(source, target, cfg.kernel);
      const FitResult fit =
          fit_regularized(source, target.without_labels(), cfg.model, graph, lambda);
      write_json(ctx.dir / "model.json", to_json(fit.model), ctx.out);
      BoundReport r;
      std::string file;
      if (cfg.experiment == ExperimentKind::TransductiveT1) {
        r = theorem1_report(fit.model, source, target, graph, f0, lambda);
        file = "bound_t1.json";
      } else if (cfg.experiment == ExperimentKind::InductiveT2) {
        CovariateShiftSpec spec = cfg.covariate_shift().spec;
        r = theorem2_report(fit.model, spec, f0, cfg.kernel, lambda, cfg.mc_n,
                            derive_seed(ctx.seed, 200));
        file = "bound_t2.json";
      } else {
        CovariateShiftSpec spec = cfg.covariate_shift().spec;
        r = theorem5_report(fit.model, f0, *cfg.covariate_shift().target_regression_fn, spec,
                            cfg.kernel, lambda, cfg.mc_n, derive_seed(ctx.seed, 200));
        file = "bound_t5.json";
      }
      record_bound(ctx, file, r);
      ctx.summary.rows.push_back(
          bound_row(seed, lambda, r, fit.report, target_mse(fit.model, target)));
      break;
    }
    case ExperimentKind::DomgenT3: {
      const AdversaryOptions& adv = *cfg.adversary;
      AdversaryConfig ac = adv.config;
      ac.seed = derive_seed(ctx.seed, 300 + adv.config.seed);
      const FitResult fit = fit_adversarial(source, cfg.model, ac, lambda, adv.outer_iterations);
      write_json(ctx.dir / "model.json", to_json(fit.model), ctx.out);
      const BoundReport r = theorem3_report(fit.model, source, f0, ac, adv.n_adversaries,
                                            derive_seed(ctx.seed, 301));
      record_bound(ctx, "bound_t3.json", r);
      ctx.summary.rows.push_back(
          bound_row(seed, lambda, r, fit.report, target_mse(fit.model, target)));
      break;
    }
    case ExperimentKind::ErmVsIfSweep: {
      const FitResult erm = fit_erm(source, cfg.model);
      write_json(ctx.dir / "model_erm.json", to_json(erm.model), ctx.out);
      const double erm_mse = target_mse(erm.model, target);
      const LaplacianGraph graph = build_graph(source, target, cfg.kernel);
      Json metrics = Json::array();
      MetricReport em{"target_mse_erm", erm_mse, {}, ""};
      metrics.push_back(to_json(em));
      for (double l : cfg.lambdas) {
        const FitResult fit = fit_regularized(source, target.without_labels(), cfg.model, graph, l);
        write_json(ctx.dir / ("model_lambda_" + num(l) + ".json"), to_json(fit.model), ctx.out);
        const double mse = target_mse(fit.model, target);
        MetricReport m{"target_mse_regularized", mse, {{"lambda", l}}, ""};
        metrics.push_back(to_json(m));
        ctx.summary.rows.push_back({seed, num(l), num(erm_mse), num(mse), num(erm_mse - mse),
                                    num(fit.report.train_loss), num(fit.report.regularizer_value)});
      }
      write_json(ctx.dir / "metrics.json", metrics, ctx.out);
      break;
    }
    case ExperimentKind::AlignmentT4:
      break;
  }
}

// Least squares on +-1 targets (label > 0), thresholded at 0.
inline Model fit_sign_classifier(const Matrix& x, const Vector& y) {
  Vector t(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) t(i) = y(i) > 0.0 ? 1.0 : -1.0;
  return fit_erm(Dataset(x, Domain::Source, t), ModelSpec::linear()).model;
}

inline std::vector<int> signs(const Vector& y) { return threshold_at_zero(y); }

inline void run_alignment_seed(SeedContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  const FactorModelData& fd = cfg.factor_model();
  FactorModelSpec spec = fd.spec;
  spec.seed = ctx.seed;
  const Dataset data = generate_factor_model_groups(spec, fd.n_per_group, fd.paired_u);
  write_dataset(ctx.dir / "data.csv", data, ctx.out);
  if (ctx.data_only) return;
  AlignmentConfig ac = cfg.alignment.config;
  ac.seed = derive_seed(ctx.seed, 400 + cfg.alignment.config.seed);
  const AlignmentFit fit = fit_alignment(data, cfg.alignment.q, cfg.sinkhorn, ac);
  write_json(ctx.dir / "alignment_map.json", to_json(fit.map), ctx.out);
  Table trace{{"step", "divergence", "objective", "relative_phi_b"}, {}};
  for (std::size_t i = 0; i < fit.trace.divergence.size(); ++i) {
    trace.rows.push_back({std::to_string(i), num(fit.trace.divergence[i]),
                          num(fit.trace.objective[i]),
                          num(relative_phi_b(fit.trace.maps[i], spec.protected_direction))});
  }
  write_text(ctx.dir / "trace.csv", trace.str(), ctx.out);
  const BoundReport r = verify_theorem4(fit.map, spec, fd.n_per_group, derive_seed(ctx.seed, 401),
                                        cfg.sinkhorn, &fit.trace, cfg.alignment.threshold);
  record_bound(ctx, "bound_t4.json", r);

  Json metrics = Json::array();
  const MetricSpec fair = MetricSpec::removing(spec.protected_direction);
  std::string pc_raw = "", pc_aligned = "";
  if (spec.labels) {
    const Matrix& x = data.features();
    const Model raw = fit_sign_classifier(x, data.labels());
    const Model inner = fit_sign_classifier(fit.map.apply(x), data.labels());
    const Composed<Model> aligned(inner, fit.map.matrix());
    write_json(ctx.dir / "model_raw.json", to_json(raw), ctx.out);
    write_json(ctx.dir / "model_aligned.json", to_json(inner), ctx.out);
    const FactorModelSpec test_spec = [&] {
      FactorModelSpec s = spec;
      s.seed = derive_seed(ctx.seed, 402);
      return s;
    }();
    const Dataset test = generate_factor_model_groups(test_spec, fd.n_per_group);
    const std::vector<int> truth = signs(test.labels());
    auto add_model = [&](const std::string& tag, const auto& model) {
      const ConsistencyReport pc = prediction_consistency(model, test, spec.protected_direction);
      metrics.push_back(to_json(MetricReport{"prediction_consistency_" + tag, pc.classification,
                                             {{"regression_inconsistency", pc.regression}},
                                             "classification thresholds the score at 0"}));
      const std::vector<int> pred = threshold_at_zero(model.predict(test.features()));
      bool both = false;
      for (int t : truth) both |= t != truth.front();
      if (both) {
        MetricReport ba = balanced_accuracy(pred, truth);
        ba.name += "_" + tag;
        metrics.push_back(to_json(ba));
      }
      MetricReport lip = empirical_if_lipschitz(model, test, fair, 2000, derive_seed(ctx.seed, 403),
                                                spec.protected_direction);
      lip.name += "_" + tag;
      metrics.push_back(to_json(lip));
      return pc.classification;
    };
    pc_raw = num(add_model("raw", raw));
    pc_aligned = num(add_model("aligned", aligned));
  }
  write_json(ctx.dir / "metrics.json", metrics, ctx.out);
  ctx.summary.rows.push_back({std::to_string(ctx.seed), r.theorem, num(r.lhs), num(r.rhs()),
                              r.verdict(), num(r.quantities.at("initial_divergence")),
                              num(r.quantities.at("final_divergence")),
                              num(r.quantities.at("divergence_reduction")),
                              num(r.quantities.at("divergence_fresh")), pc_raw, pc_aligned});
}

inline std::vector<std::string> summary_columns(ExperimentKind k) {
  if (k == ExperimentKind::ErmVsIfSweep) {
    return {"seed", "lambda", "target_mse_erm", "target_mse_regularized", "improvement",
            "train_loss", "regularizer_value"};
  }
  if (k == ExperimentKind::AlignmentT4) {
    return {"seed", "theorem", "relative_phi_b", "threshold", "verdict", "initial_divergence",
            "final_divergence", "divergence_reduction", "divergence_fresh",
            "prediction_consistency_raw", "prediction_consistency_aligned"};
  }
  return kBoundColumns;
}

}  // namespace experiment_detail

// Runs every seed of `cfg`. One seed writes into output_dir directly; several
// seeds write into output_dir/seed_<s>/, with summary.csv at the top level.
// With `data_only`, only the datasets are generated.
inline RunOutcome run_experiment(const ExperimentConfig& cfg, bool data_only = false) {
  namespace fs = std::filesystem;
  RunOutcome out;
  const fs::path root = resolve_output_dir(cfg.output_dir);
  fs::create_directories(root);
  experiment_detail::Table summary{experiment_detail::summary_columns(cfg.experiment), {}};
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = cfg.seeds.size() == 1 ? root : root / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    experiment_detail::SeedContext ctx{cfg, seed, dir, out, summary, data_only};
    if (cfg.experiment == ExperimentKind::AlignmentT4) {
      experiment_detail::run_alignment_seed(ctx);
    } else {
      experiment_detail::run_covariate_seed(ctx);
    }
  }
  if (!data_only) experiment_detail::write_text(root / "summary.csv", summary.str(), out);
  return out;
}

// Runs a config file and maps failures onto the exit-code contract.
inline RunOutcome run_config_file(const std::string& path, bool data_only = false) {
  RunOutcome out;
  try {
    const ExperimentConfig cfg = load_config(path);
    return run_experiment(cfg, data_only);
  } catch (const NumericError& e) {
    out.exit_code = kExitNumeric;
    out.messages.push_back("numeric error in module " + e.module() + ": " + e.what());
  } catch (const ValidationError& e) {
    out.exit_code = kExitConfig;
    out.messages.push_back(std::string("invalid configuration: ") + e.what());
  } catch (const ParseError& e) {
    out.exit_code = kExitConfig;
    out.messages.push_back(std::string("parse error: ") + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    out.exit_code = kExitConfig;
    out.messages.push_back(std::string("output error: ") + e.what());
  }
  return out;
}

struct ReportEntry {
  std::string file;
  std::string theorem;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  std::string verdict;
  bool consistent = true;  // stored verdict matches the recomputed one
};

// Re-derives every bound_*.json verdict under `dir` from its lhs and rhs
// terms instead of trusting the stored fields.
inline std::vector<ReportEntry> collect_reports(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("report: '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("bound_", 0) == 0 && e.path().extension() == ".json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<ReportEntry> out;
  for (const fs::path& f : files) {
    std::ifstream in(f);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
    const std::string rel = fs::relative(f, dir).string();
    if (!j.is_object() || !j.contains("lhs") || !j.contains("rhs_terms") ||
        !j["rhs_terms"].is_object() || !j["lhs"].is_number()) {
      throw ParseError(rel + ": not a bound report");
    }
    BoundReport r;
    r.theorem = j.value("theorem", std::string("?"));
    r.lhs = j["lhs"].get<double>();
    for (auto it = j["rhs_terms"].begin(); it != j["rhs_terms"].end(); ++it) {
      if (!it.value().is_number()) throw ParseError(rel + ": rhs term '" + it.key() + "' is not a number");
      r.rhs_terms[it.key()] = it.value().get<double>();
    }
    r.standard_error = j.value("standard_error", 0.0);
    r.degenerate = j.value("degenerate", false);
    r.finalize();
    ReportEntry e{rel, r.theorem, r.lhs, r.rhs(), r.slack, r.verdict(), true};
    e.consistent = j.value("verdict", std::string()) == e.verdict && j.contains("holds") &&
                   j["holds"].is_boolean() && j["holds"].get<bool>() == r.holds;
    out.push_back(e);
  }
  return out;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_EXPERIMENT_HPP_
