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


#ifndef FAIRSHIFT_METRICS_HPP_
#define FAIRSHIFT_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairshift/data.hpp"
#include "fairshift/errors.hpp"
#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/linalg.hpp"
#include "fairshift/model.hpp"
#include "fairshift/predictor.hpp"
#include "fairshift/rng.hpp"

namespace fairshift {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, double> group_values;
  std::string note;
};

inline Json to_json(const MetricReport& r) {
  Json j;
  j["name"] = r.name;
  j["value"] = r.value;
  if (!r.group_values.empty()) j["group_values"] = r.group_values;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

namespace metrics_detail {

inline void check_binary(const std::vector<int>& v, const char* op, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0 && v[i] != 1) {
      throw ValidationError(std::string(op) + ": " + what + "[" + std::to_string(i) +
                            "] must be 0 or 1");
    }
  }
}

inline void check_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ValidationError(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
  if (a == 0) throw ValidationError(std::string(op) + ": empty input");
}

}  // namespace metrics_detail

// Thresholds real scores at 0 into {0, 1}.
inline std::vector<int> threshold_at_zero(const Vector& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.size(); ++i) out[static_cast<std::size_t>(i)] = scores(i) > 0.0;
  return out;
}

// Mean of the two per-class accuracies.
inline MetricReport balanced_accuracy(const std::vector<int>& predictions,
                                      const std::vector<int>& labels) {
  metrics_detail::check_lengths(predictions.size(), labels.size(), "balanced_accuracy");
  metrics_detail::check_binary(predictions, "balanced_accuracy", "predictions");
  metrics_detail::check_binary(labels, "balanced_accuracy", "labels");
  double hit[2] = {0.0, 0.0}, count[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    count[labels[i]] += 1.0;
    hit[labels[i]] += predictions[i] == labels[i];
  }
  if (count[0] == 0.0 || count[1] == 0.0) {
    throw ValidationError("balanced_accuracy: labels contain a single class");
  }
  MetricReport r;
  r.name = "balanced_accuracy";
  r.group_values = {{"class_0", hit[0] / count[0]}, {"class_1", hit[1] / count[1]}};
  r.value = 0.5 * (hit[0] / count[0] + hit[1] / count[1]);
  return r;
}

// Unweighted mean over groups of the true-negative rate (label 0 predicted 0).
inline MetricReport group_tnr(const std::vector<int>& predictions, const std::vector<int>& labels,
                              const std::vector<std::string>& groups) {
  metrics_detail::check_lengths(predictions.size(), labels.size(), "group_tnr");
  metrics_detail::check_lengths(groups.size(), labels.size(), "group_tnr");
  metrics_detail::check_binary(predictions, "group_tnr", "predictions");
  metrics_detail::check_binary(labels, "group_tnr", "labels");
  std::map<std::string, std::pair<double, double>> cells;  // (true negatives, negatives)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = cells[groups[i]];
    if (labels[i] == 0) {
      c.second += 1.0;
      c.first += predictions[i] == 0;
    }
  }
  MetricReport r;
  r.name = "group_tnr";
  double sum = 0.0;
  for (const auto& [g, c] : cells) {
    if (c.second == 0.0) {
      throw ValidationError("group_tnr: group '" + g + "' has no negative labels");
    }
    r.group_values[g] = c.first / c.second;
    sum += c.first / c.second;
  }
  r.value = sum / static_cast<double>(cells.size());
  return r;
}

// For each class, the worst accuracy over groups; value is the mean over classes.
inline MetricReport worst_per_group_accuracy(const std::vector<int>& predictions,
                                             const std::vector<int>& labels,
                                             const std::vector<std::string>& classes,
                                             const std::vector<std::string>& groups) {
  const char* op = "worst_per_group_accuracy";
  metrics_detail::check_lengths(predictions.size(), labels.size(), op);
  metrics_detail::check_lengths(classes.size(), labels.size(), op);
  metrics_detail::check_lengths(groups.size(), labels.size(), op);
  std::map<std::string, std::map<std::string, std::pair<double, double>>> cells;
  std::vector<std::string> all_groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = cells[classes[i]][groups[i]];
    c.second += 1.0;
    c.first += predictions[i] == labels[i];
    all_groups.push_back(groups[i]);
  }
  std::sort(all_groups.begin(), all_groups.end());
  all_groups.erase(std::unique(all_groups.begin(), all_groups.end()), all_groups.end());
  MetricReport r;
  r.name = "worst_per_group_accuracy";
  double sum = 0.0;
  for (const auto& [cls, by_group] : cells) {
    double worst = 1.0;
    for (const std::string& g : all_groups) {
      const auto it = by_group.find(g);
      if (it == by_group.end()) {
        throw ValidationError(std::string(op) + ": cell (class '" + cls + "', group '" + g +
                              "') is empty");
      }
      worst = std::min(worst, it->second.first / it->second.second);
    }
    r.group_values[cls] = worst;
    sum += worst;
  }
  r.value = sum / static_cast<double>(cells.size());
  return r;
}

// Global Lipschitz constant of a linear model under `metric`: ||w|| when w
// lies in the range of the metric's projection, +inf otherwise.
inline double linear_if_lipschitz(const Model& model, const MetricSpec& metric) {
  const Vector w = model.slope();
  if (metric.kind == MetricSpec::Kind::Euclidean) return w.norm();
  metric.check_dimension(w.size());
  const Vector pw = metric.projection * w;
  if ((w - pw).norm() > 1e-12 * std::max(1.0, w.norm())) {
    return std::numeric_limits<double>::infinity();
  }
  return pw.norm();
}

// Empirical probe of |f(x) - f(x')| <= L d(x, x'). Half of the pairs are
// uniform rows (i != j); when `flip_direction` is given the other half are
// (x, x + (1 - 2z) b). Pairs with d below a relative 1e-12 are not used in the
// ratio; they count as consistent iff |f(x) - f(x')| is below the same bound.
template <Predictor F>
MetricReport empirical_if_lipschitz(const F& model, const Dataset& dataset,
                                    const MetricSpec& metric, std::int64_t pairs,
                                    std::uint64_t seed,
                                    const std::optional<Vector>& flip_direction = std::nullopt) {
  if (pairs < 1) throw ValidationError("empirical_if_lipschitz: pairs must be >= 1");
  metric.check_dimension(dataset.dim());
  const Matrix& x = dataset.features();
  const Eigen::Index n = x.rows();
  const bool flips = flip_direction.has_value();
  if (flips) {
    if (!dataset.has_protected()) {
      throw ValidationError("empirical_if_lipschitz: flip pairs need a protected attribute");
    }
    if (flip_direction->size() != dataset.dim()) {
      throw ValidationError("empirical_if_lipschitz: flip direction has wrong length");
    }
  }
  if (!flips && n < 2) {
    throw ValidationError("empirical_if_lipschitz: need at least two rows for uniform pairs");
  }
  SplitMix64 rng(derive_seed(seed, 30));
  const std::int64_t n_flip = flips ? (n < 2 ? pairs : pairs / 2) : 0;
  const std::int64_t n_uniform = pairs - n_flip;
  Matrix a(pairs, x.cols()), b(pairs, x.cols());
  std::vector<int> is_flip(static_cast<std::size_t>(pairs), 0);
  for (std::int64_t k = 0; k < n_uniform; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (j >= i) ++j;
    a.row(k) = x.row(i);
    b.row(k) = x.row(j);
  }
  for (std::int64_t k = n_uniform; k < pairs; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const double z = dataset.protected_attribute()(i);
    a.row(k) = x.row(i);
    b.row(k) = x.row(i) + (1.0 - 2.0 * z) * flip_direction->transpose();
    is_flip[static_cast<std::size_t>(k)] = 1;
  }
  const Vector fa = model.predict(a);
  const Vector fb = model.predict(b);
  double max_ratio = 0.0, zero_max_diff = 0.0, flip_max_ratio = 0.0;
  std::int64_t zero_pairs = 0, zero_consistent = 0;
  for (std::int64_t k = 0; k < pairs; ++k) {
    const double d = metric.distance(a.row(k).transpose(), b.row(k).transpose());
    const double diff = std::abs(fa(k) - fb(k));
    const double scale = 1e-12 * std::max(1.0, a.row(k).norm() + b.row(k).norm());
    if (d <= scale) {
      ++zero_pairs;
      zero_max_diff = std::max(zero_max_diff, diff);
      zero_consistent += diff <= scale * std::max(1.0, std::abs(fa(k)) + std::abs(fb(k)));
      continue;
    }
    max_ratio = std::max(max_ratio, diff / d);
    if (is_flip[static_cast<std::size_t>(k)]) flip_max_ratio = std::max(flip_max_ratio, diff / d);
  }
  MetricReport r;
  r.name = "empirical_if_lipschitz";
  r.value = max_ratio;
  r.group_values = {{"pairs", static_cast<double>(pairs)},
                    {"uniform_pairs", static_cast<double>(n_uniform)},
                    {"flip_pairs", static_cast<double>(n_flip)},
                    {"flip_max_ratio", flip_max_ratio},
                    {"zero_distance_pairs", static_cast<double>(zero_pairs)},
                    {"zero_distance_consistent", static_cast<double>(zero_consistent)},
                    {"zero_distance_max_abs_diff", zero_max_diff}};
  return r;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_METRICS_HPP_
