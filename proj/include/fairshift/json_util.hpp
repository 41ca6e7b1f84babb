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

#ifndef FAIRSHIFT_JSON_UTIL_HPP_
#define FAIRSHIFT_JSON_UTIL_HPP_

#include <json.hpp>
#include <string>

#include "fairshift/errors.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/linalg.hpp"

namespace fairshift {

using Json = nlohmann::json;

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// Row-major nested arrays.
inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Vector vector_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ValidationError(path + "[" + std::to_string(i) + "]: expected a number");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  const Vector first = vector_from_json(j[0], path + "[0]");
  Matrix m(rows, first.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const Vector r = vector_from_json(j[static_cast<std::size_t>(i)], p);
    if (r.size() != first.size()) throw ValidationError(p + ": ragged matrix row");
    m.row(i) = r.transpose();
  }
  return m;
}

inline Json to_json(const MetricSpec& m) {
  Json j;
  if (m.kind == MetricSpec::Kind::Euclidean) {
    j["kind"] = "euclidean";
  } else {
    j["kind"] = "fair_projection";
    j["projection"] = to_json(m.projection);
  }
  return j;
}

inline Json to_json(const KernelSpec& k) {
  Json j;
  j["family"] = to_string(k.family);
  j["bandwidth"] = k.bandwidth;
  j["metric"] = to_json(k.metric);
  if (k.unit) j["unit"] = true;
  return j;
}

inline MetricSpec metric_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  const std::string kind = j.value("kind", std::string("euclidean"));
  if (kind == "euclidean") return MetricSpec::euclidean();
  if (kind == "fair_projection") {
    if (j.contains("projection")) {
      MetricSpec m{MetricSpec::Kind::FairProjection,
                   matrix_from_json(j["projection"], path + ".projection")};
      try {
        m.validate();
      } catch (const ValidationError& e) {
        throw ValidationError(path + ".projection: " + e.what());
      }
      return m;
    }
    if (j.contains("remove_directions")) {
      const Matrix dirs =
          matrix_from_json(j["remove_directions"], path + ".remove_directions");
      return MetricSpec::removing(dirs.transpose());
    }
    throw ValidationError(path + ": fair_projection needs 'projection' or "
                                 "'remove_directions'");
  }
  throw ValidationError(path + ".kind: unknown metric '" + kind + "'");
}

inline KernelSpec kernel_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  KernelSpec k;
  const std::string family = j.value("family", std::string("rbf"));
  if (family == "rbf") {
    k.family = KernelSpec::Family::RBF;
  } else if (family == "laplace") {
    k.family = KernelSpec::Family::Laplace;
  } else {
    throw ValidationError(path + ".family: unknown kernel family '" + family + "'");
  }
  if (j.contains("bandwidth")) {
    if (!j["bandwidth"].is_number()) {
      throw ValidationError(path + ".bandwidth: expected a number");
    }
    k.bandwidth = j["bandwidth"].get<double>();
  }
  k.unit = j.value("unit", false);
  if (j.contains("metric")) k.metric = metric_from_json(j["metric"], path + ".metric");
  if (!k.unit && !(k.bandwidth > 0.0)) {
    throw ValidationError(path + ".bandwidth: must be > 0");
  }
  return k;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_JSON_UTIL_HPP_
