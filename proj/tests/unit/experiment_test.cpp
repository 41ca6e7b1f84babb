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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fairshift/experiment.hpp"

namespace fairshift {
namespace {

namespace fs = std::filesystem;

Json t1_config() {
  return Json::parse(R"({
    "experiment": "transductive_t1",
    "data": {"kind": "covariate_shift",
             "regression_fn": {"kind": "sine", "frequency": 2.0},
             "source_law": {"mean": [0.0], "sd": 1.0},
             "target_law": {"mean": [1.0], "sd": 1.0},
             "n_source": 30, "n_target": 30},
    "kernel": {"family": "rbf", "bandwidth": 1.0},
    "solver": {"model": {"family": "linear"}, "lambda": 1.0},
    "seeds": [7]
  })");
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("fairshift_experiment_test_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).string());
  }
  return out;
}

std::size_t data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += !line.empty();
  return n - 1;
}

void expect_config_error(const Json& j, const std::string& fragment) {
  try {
    parse_config(j);
    FAIL() << "expected ValidationError mentioning " << fragment;
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Config, ParsesDefaults) {
  const ExperimentConfig c = parse_config(t1_config());
  EXPECT_EQ(c.experiment, ExperimentKind::TransductiveT1);
  EXPECT_EQ(c.covariate_shift().n_source, 30);
  EXPECT_EQ(c.lambdas, std::vector<double>{1.0});
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{7});
  EXPECT_EQ(c.mc_n, 20000);
  EXPECT_EQ(c.output_dir, "fairshift_out");
}

TEST(Config, ErrorsNameTheFieldPath) {
  Json j = t1_config();
  j["solver"]["lambda"] = 0.0;
  expect_config_error(j, "config.solver.lambda: must be > 0");

  j = t1_config();
  j["solver"]["bogus"] = 1;
  expect_config_error(j, "config.solver.bogus: unknown field");

  j = t1_config();
  j["kernel"]["kind"] = "rbf";
  expect_config_error(j, "config.kernel.kind: unknown field");

  j = t1_config();
  j["solver"]["model"]["degree"] = 2;
  expect_config_error(j, "config.solver.model.degree: unknown field");

  j = t1_config();
  j["kernel"]["family"] = "cosine";
  expect_config_error(j, "config.kernel.family: unknown kernel family 'cosine'");

  j = t1_config();
  j["data"]["source_law"]["sd"] = -1.0;
  expect_config_error(j, "config.data.source_law.sd");

  j = t1_config();
  j["data"]["target_law"]["mean"] = {0.0, 1.0};
  expect_config_error(j, "config.data.target_law");

  j = t1_config();
  j["data"]["regression_fn"]["kind"] = "wavelet";
  expect_config_error(j, "config.data.regression_fn.kind");

  j = t1_config();
  j["seeds"] = {1, 1};
  expect_config_error(j, "config.seeds[1]: duplicate seed");

  j = t1_config();
  j["seeds"] = {1, -2};
  expect_config_error(j, "config.seeds[1]");

  j = t1_config();
  j["mc_n"] = 10;
  expect_config_error(j, "config.mc_n: must be >= 1000");

  j = t1_config();
  j["solver"].erase("lambda");
  j["solver"]["lambdas"] = {0.1, 1.0};
  expect_config_error(j, "only erm_vs_if_sweep");

  j = t1_config();
  j.erase("data");
  expect_config_error(j, "config.data: required field missing");

  j = t1_config();
  j["experiment"] = "t9";
  expect_config_error(j, "config.experiment: unknown experiment 't9'");
}

TEST(Config, ExperimentRequirements) {
  Json j = t1_config();
  j["experiment"] = "domgen_t3";
  expect_config_error(j, "config.adversary: required by domgen_t3");

  j = t1_config();
  j["experiment"] = "general_shift_t5";
  expect_config_error(j, "config.data.target_regression_fn: required by general_shift_t5");

  j = t1_config();
  j["experiment"] = "alignment_t4";
  expect_config_error(j, "alignment_t4 requires 'factor_model'");

  Json a = Json::parse(R"({
    "experiment": "alignment_t4",
    "data": {"kind": "factor_model", "loading": [[1.0], [0.0]],
             "protected_direction": [0.0, 1.0], "n_per_group": 50},
    "alignment": {"q": 2}
  })");
  expect_config_error(a, "config.alignment.q: must be < p = 2");
  a["alignment"]["q"] = 1;
  a["data"]["protected_direction"] = {1.0};
  expect_config_error(a, "config.data: FactorModelSpec: protected_direction");
}

TEST(Config, SweepAcceptsZeroLambda) {
  Json j = t1_config();
  j["experiment"] = "erm_vs_if_sweep";
  j["solver"].erase("lambda");
  j["solver"]["lambdas"] = {0.0, 0.1, 1.0};
  EXPECT_EQ(parse_config(j).lambdas.size(), 3u);
  j["solver"]["lambdas"] = {0.1, -1.0};
  expect_config_error(j, "config.solver.lambdas[1]: must be >= 0");
}

TEST(Config, LoadReportsUnreadableAndInvalidFiles) {
  TempDir tmp;
  EXPECT_THROW(load_config((tmp.path() / "missing.json").string()), ValidationError);
  std::ofstream(tmp.path() / "bad.json") << "{ not json";
  EXPECT_THROW(load_config((tmp.path() / "bad.json").string()), ValidationError);
}

TEST(Config, ShippedConfigsParse) {
  int count = 0;
  for (const auto& e : fs::directory_iterator(FAIRSHIFT_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    ++count;
  }
  EXPECT_EQ(count, 6);
}

TEST(Run, TransductiveManifestIsExact) {
  TempDir tmp;
  Json j = t1_config();
  j["output_dir"] = (tmp.path() / "out").string();
  const RunOutcome out = run_experiment(parse_config(j));
  EXPECT_EQ(out.exit_code, kExitOk);
  const std::set<std::string> expected = {"data_source.csv", "data_target.csv", "model.json",
                                          "bound_t1.json", "summary.csv"};
  EXPECT_EQ(listing(tmp.path() / "out"), expected);
  EXPECT_EQ(data_rows(tmp.path() / "out" / "summary.csv"), 1u);
  const Json bound = Json::parse(slurp(tmp.path() / "out" / "bound_t1.json"));
  EXPECT_EQ(bound["theorem"], "T1");
  EXPECT_EQ(bound["holds"], true);
  EXPECT_EQ(bound["seeds"].size(), 0u);
}

TEST(Run, SweepWritesOneRowPerLambda) {
  TempDir tmp;
  Json j = t1_config();
  j["experiment"] = "erm_vs_if_sweep";
  j["solver"].erase("lambda");
  j["solver"]["lambdas"] = {0.0, 0.1, 1.0};
  j["output_dir"] = (tmp.path() / "sweep").string();
  const RunOutcome out = run_experiment(parse_config(j));
  EXPECT_EQ(out.exit_code, kExitOk);
  const fs::path summary = tmp.path() / "sweep" / "summary.csv";
  EXPECT_EQ(data_rows(summary), 3u);
  const std::string header = slurp(summary).substr(0, slurp(summary).find('\n'));
  EXPECT_NE(header.find("target_mse_erm"), std::string::npos);
  EXPECT_NE(header.find("target_mse_regularized"), std::string::npos);
}

TEST(Run, SeveralSeedsUseSubdirectories) {
  TempDir tmp;
  Json j = t1_config();
  j["seeds"] = {1, 2};
  j["output_dir"] = (tmp.path() / "multi").string();
  ASSERT_EQ(run_experiment(parse_config(j)).exit_code, kExitOk);
  EXPECT_TRUE(fs::exists(tmp.path() / "multi" / "seed_1" / "bound_t1.json"));
  EXPECT_TRUE(fs::exists(tmp.path() / "multi" / "seed_2" / "bound_t1.json"));
  EXPECT_EQ(data_rows(tmp.path() / "multi" / "summary.csv"), 2u);
}

TEST(Run, RerunIsByteIdentical) {
  TempDir tmp;
  for (const char* name : {"a", "b"}) {
    Json j = t1_config();
    j["output_dir"] = (tmp.path() / name).string();
    ASSERT_EQ(run_experiment(parse_config(j)).exit_code, kExitOk);
  }
  for (const std::string& f : listing(tmp.path() / "a")) {
    EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
  }
}

TEST(Run, DataOnlyWritesDatasets) {
  TempDir tmp;
  Json j = t1_config();
  j["output_dir"] = (tmp.path() / "data").string();
  EXPECT_EQ(run_experiment(parse_config(j), true).exit_code, kExitOk);
  const std::set<std::string> expected = {"data_source.csv", "data_target.csv"};
  EXPECT_EQ(listing(tmp.path() / "data"), expected);
}

TEST(Run, ConfigFileExitCodes) {
  TempDir tmp;
  Json bad = t1_config();
  bad["solver"]["lambda"] = -1.0;
  std::ofstream(tmp.path() / "bad.json") << bad.dump();
  const RunOutcome b = run_config_file((tmp.path() / "bad.json").string());
  EXPECT_EQ(b.exit_code, kExitConfig);
  ASSERT_FALSE(b.messages.empty());
  EXPECT_NE(b.messages[0].find("config.solver.lambda"), std::string::npos);

  // The second coordinate is identically 0, so the normal equations are singular.
  Json singular = t1_config();
  singular["data"]["source_law"] = {{"mean", {0.0, 0.0}}, {"covariance", {{1.0, 0.0}, {0.0, 0.0}}}};
  singular["data"]["target_law"] = {{"mean", {1.0, 0.0}}, {"covariance", {{1.0, 0.0}, {0.0, 0.0}}}};
  singular["output_dir"] = (tmp.path() / "singular").string();
  std::ofstream(tmp.path() / "singular.json") << singular.dump();
  const RunOutcome s = run_config_file((tmp.path() / "singular.json").string());
  EXPECT_EQ(s.exit_code, kExitNumeric);
  ASSERT_FALSE(s.messages.empty());
  EXPECT_NE(s.messages[0].find("module solver"), std::string::npos);
}

TEST(Run, OutputRootOverride) {
  TempDir tmp;
  ::setenv("FAIRSHIFT_OUTPUT_ROOT", tmp.path().c_str(), 1);
  Json j = t1_config();
  j["output_dir"] = "relative_out";
  const RunOutcome out = run_experiment(parse_config(j), true);
  ::unsetenv("FAIRSHIFT_OUTPUT_ROOT");
  EXPECT_EQ(out.exit_code, kExitOk);
  EXPECT_TRUE(fs::exists(tmp.path() / "relative_out" / "data_source.csv"));
}

TEST(Reports, RecomputedVerdictCatchesTampering) {
  TempDir tmp;
  Json j = t1_config();
  j["output_dir"] = tmp.path().string();
  ASSERT_EQ(run_experiment(parse_config(j)).exit_code, kExitOk);
  std::vector<ReportEntry> entries = collect_reports(tmp.path().string());
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_TRUE(entries[0].consistent);
  EXPECT_EQ(entries[0].verdict, "holds");

  const fs::path file = tmp.path() / "bound_t1.json";
  Json bound = Json::parse(slurp(file));
  bound["lhs"] = bound["rhs"].get<double>() * 2.0 + 1.0;
  std::ofstream(file, std::ios::trunc) << bound.dump(2);
  entries = collect_reports(tmp.path().string());
  EXPECT_EQ(entries[0].verdict, "fails");
  EXPECT_FALSE(entries[0].consistent);

  std::ofstream(file, std::ios::trunc) << "[1, 2]";
  EXPECT_THROW(collect_reports(tmp.path().string()), ParseError);
  EXPECT_THROW(collect_reports((tmp.path() / "nope").string()), ValidationError);
}

TEST(Run, AlignmentRunWritesMetrics) {
  TempDir tmp;
  Json j = Json::parse(R"({
    "experiment": "alignment_t4",
    "data": {"kind": "factor_model", "loading": [[1.0], [0.0], [0.5]],
             "protected_direction": [0.0, 1.0, 0.0], "noise_sd": 0.1,
             "n_per_group": 150, "labels": {"weights": [1.0], "bias": 0.0, "noise_sd": 0.1}},
    "alignment": {"q": 2, "steps": 40}
  })");
  j["output_dir"] = tmp.path().string();
  const RunOutcome out = run_experiment(parse_config(j));
  EXPECT_NE(out.exit_code, kExitNumeric);
  for (const char* f : {"data.csv", "alignment_map.json", "trace.csv", "bound_t4.json",
                        "metrics.json", "model_raw.json", "model_aligned.json", "summary.csv"}) {
    EXPECT_TRUE(fs::exists(tmp.path() / f)) << f;
  }
  const Json metrics = Json::parse(slurp(tmp.path() / "metrics.json"));
  std::set<std::string> names;
  for (const Json& m : metrics) names.insert(m["name"].get<std::string>());
  EXPECT_TRUE(names.count("prediction_consistency_raw"));
  EXPECT_TRUE(names.count("prediction_consistency_aligned"));
}

}  // namespace
}  // namespace fairshift
