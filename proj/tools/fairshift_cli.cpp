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


#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "fairshift/fairshift.hpp"

namespace {

using fairshift::RunOutcome;

int finish(const RunOutcome& out) {
  for (const auto& m : out.messages) std::cerr << m << "\n";
  return out.exit_code;
}

int cmd_run(const std::string& config, bool data_only) {
  const RunOutcome out = fairshift::run_config_file(config, data_only);
  if (out.exit_code == fairshift::kExitOk || out.exit_code == fairshift::kExitBoundFailed) {
    std::cout << "wrote " << out.files.size() << " files\n";
  }
  return finish(out);
}

int cmd_verify_all(int seeds, const std::string& output_dir, const std::string& fault) {
  fairshift::BatteryOptions o;
  for (int s = 0; s < seeds; ++s) o.seeds.push_back(static_cast<std::uint64_t>(s));
  o.fault = fault;
  const auto results = fairshift::run_battery(o, [](const fairshift::CheckResult& r) {
    std::cout << std::left << std::setw(24) << r.name << (r.ok ? "pass" : "FAIL") << "  "
              << r.passed << "/" << r.trials;
    if (!r.note.empty() && !r.ok) std::cout << "  " << r.note;
    std::cout << std::endl;
  });
  namespace fs = std::filesystem;
  const fs::path dir = fairshift::resolve_output_dir(output_dir);
  fs::create_directories(dir);
  RunOutcome out;
  fairshift::experiment_detail::write_json(dir / "verify_all.json",
                                           fairshift::battery_json(o, results), out);
  fairshift::experiment_detail::write_text(dir / "verify_all.csv",
                                           fairshift::battery_table(results), out);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    if (!r.ok) failed.push_back(r.name + " (" + r.description + ")");
  }
  if (failed.empty()) {
    std::cout << "all " << results.size() << " checks passed\n";
    return 0;
  }
  std::cerr << "failed checks:\n";
  for (const auto& f : failed) std::cerr << "  " << f << "\n";
  return 1;
}

int cmd_report(const std::string& dir) {
  std::vector<fairshift::ReportEntry> entries;
  try {
    entries = fairshift::collect_reports(dir);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return fairshift::kExitConfig;
  }
  int code = fairshift::kExitOk;
  std::cout << std::left << std::setw(32) << "file" << std::setw(8) << "theorem" << std::setw(16)
            << "lhs" << std::setw(16) << "rhs" << std::setw(16) << "slack" << "verdict\n";
  for (const auto& e : entries) {
    std::cout << std::left << std::setw(32) << e.file << std::setw(8) << e.theorem
              << std::setw(16) << e.lhs << std::setw(16) << e.rhs << std::setw(16) << e.slack
              << e.verdict << (e.consistent ? "" : "  (stored verdict disagrees)") << "\n";
    if (e.verdict == "fails" || !e.consistent) code = fairshift::kExitBoundFailed;
  }
  if (entries.empty()) std::cout << "no bound reports under " << dir << "\n";
  const std::filesystem::path summary = std::filesystem::path(dir) / "summary.csv";
  if (std::filesystem::exists(summary)) std::cout << "summary: " << summary.string() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "fairshift: individual-fairness regularization under distribution shift.\n"
      "Relative output directories resolve under $FAIRSHIFT_OUTPUT_ROOT when set.\n"
      "Exit codes: 0 ok, 1 a bound or check failed, 2 invalid configuration or input, "
      "3 numeric error."};
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::string gen_config;
  auto* gen = app.add_subcommand("gen-data", "Only generate the datasets of a config");
  gen->add_option("config", gen_config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  int seeds = 3;
  std::string verify_dir = "verify_all";
  std::string fault;
  auto* verify = app.add_subcommand("verify-all", "Run the full invariant battery");
  verify->add_option("--seeds", seeds, "Number of seeds (0..N-1)")
      ->check(CLI::Range(1, 1000))
      ->capture_default_str();
  verify->add_option("--output-dir", verify_dir, "Directory for verify_all.json/.csv")
      ->capture_default_str();
  verify->add_option("--inject-fault", fault)
      ->group("")
      ->check(CLI::IsMember(fairshift::fault_targets()));

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-check and tabulate bound reports in a directory");
  report->add_option("dir", report_dir, "Output directory of a run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fairshift::kExitConfig;
  }

  if (*run) return cmd_run(config, false);
  if (*gen) return cmd_run(gen_config, true);
  if (*verify) return cmd_verify_all(seeds, verify_dir, fault);
  if (*report) return cmd_report(report_dir);
  return fairshift::kExitConfig;
}
