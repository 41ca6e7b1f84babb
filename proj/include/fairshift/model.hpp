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

#ifndef FAIRSHIFT_MODEL_HPP_
#define FAIRSHIFT_MODEL_HPP_

#include <cmath>
#include <optional>
#include <string>

#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/linalg.hpp"

namespace fairshift {

// Mean quadratic loss (1/n) sum 1/2 (f_i - y_i)^2.
inline double quadratic_train_loss(const Vector& fitted, const Vector& y) {
  return 0.5 * (fitted - y).squaredNorm() / static_cast<double>(y.size());
}

// Per-coordinate polynomial features [x_c, x_c^2, ..., x_c^degree].
struct FeatureMap {
  int degree = 1;
};

struct ModelSpec {
  enum class Family { Linear, KernelExpansion, FeatureMapLinear };
  Family family = Family::Linear;
  std::optional<FeatureMap> feature_map;
  KernelSpec kernel = KernelSpec::rbf(1.0);  // KernelExpansion only
  double ridge = 0.0;

  static ModelSpec linear(double ridge = 0.0) {
    ModelSpec s;
    s.ridge = ridge;
    return s;
  }
  static ModelSpec polynomial(int degree, double ridge = 0.0) {
    ModelSpec s;
    s.family = Family::FeatureMapLinear;
    s.feature_map = FeatureMap{degree};
    s.ridge = ridge;
    return s;
  }
  static ModelSpec kernel_expansion(KernelSpec kernel, double ridge = 1e-8) {
    ModelSpec s;
    s.family = Family::KernelExpansion;
    s.kernel = std::move(kernel);
    s.ridge = ridge;
    return s;
  }

  void validate() const {
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
      throw ValidationError("ModelSpec: ridge must be >= 0");
    }
    if (family == Family::FeatureMapLinear &&
        (!feature_map || feature_map->degree < 1)) {
      throw ValidationError("ModelSpec: FeatureMapLinear needs a feature_map "
                            "with degree >= 1");
    }
    if (family == Family::KernelExpansion) kernel.validate();
  }
};

inline const char* to_string(ModelSpec::Family f) {
  switch (f) {
    case ModelSpec::Family::Linear:
      return "linear";
    case ModelSpec::Family::KernelExpansion:
      return "kernel_expansion";
    case ModelSpec::Family::FeatureMapLinear:
      return "feature_map_linear";
  }
  return "linear";
}

// Number of design columns, intercept included.
inline Eigen::Index design_width(const ModelSpec& spec, Eigen::Index p,
                                 Eigen::Index n_anchors) {
  switch (spec.family) {
    case ModelSpec::Family::Linear:
      return 1 + p;
    case ModelSpec::Family::FeatureMapLinear:
      return 1 + p * spec.feature_map->degree;
    case ModelSpec::Family::KernelExpansion:
      return 1 + n_anchors;
  }
  return 1 + p;
}

// Design matrix Psi with f(X) = Psi * theta; column 0 is the intercept.
inline Matrix design_matrix(const ModelSpec& spec, const Matrix& x,
                            const Matrix& anchors) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Matrix psi(n, design_width(spec, p, anchors.rows()));
  psi.col(0).setOnes();
  switch (spec.family) {
    case ModelSpec::Family::Linear:
      psi.rightCols(p) = x;
      break;
    case ModelSpec::Family::FeatureMapLinear: {
      const int d = spec.feature_map->degree;
      for (Eigen::Index c = 0; c < p; ++c) {
        Vector power = x.col(c);
        for (int k = 1; k <= d; ++k) {
          psi.col(1 + c * d + (k - 1)) = power;
          if (k < d) power = power.cwiseProduct(x.col(c));
        }
      }
      break;
    }
    case ModelSpec::Family::KernelExpansion:
      psi.rightCols(anchors.rows()) = gram(spec.kernel, x, anchors);
      break;
  }
  return psi;
}

// A predictor f(x) = psi(x) . weights from one of the model families.
class Model {
 public:
  Model(ModelSpec spec, Vector weights, std::optional<Matrix> anchors = std::nullopt)
      : spec_(std::move(spec)), weights_(std::move(weights)), anchors_(std::move(anchors)) {
    spec_.validate();
    if (!weights_.allFinite()) throw ValidationError("Model: non-finite weights");
    const bool expansion = spec_.family == ModelSpec::Family::KernelExpansion;
    if (expansion != anchors_.has_value()) {
      throw ValidationError("Model: anchors must be present iff the family is "
                            "kernel_expansion");
    }
    if (expansion && weights_.size() != 1 + anchors_->rows()) {
      throw ValidationError("Model: kernel expansion needs 1 + n_anchors weights");
    }
  }

  // Constant model c for any input of dimension p.
  static Model constant(double c, Eigen::Index p) {
    Vector w = Vector::Zero(1 + p);
    w(0) = c;
    return Model(ModelSpec::linear(), std::move(w));
  }

  const ModelSpec& spec() const { return spec_; }
  const Vector& weights() const { return weights_; }
  const std::optional<Matrix>& anchors() const { return anchors_; }

  Eigen::Index input_dim() const {
    switch (spec_.family) {
      case ModelSpec::Family::Linear:
        return weights_.size() - 1;
      case ModelSpec::Family::FeatureMapLinear:
        return (weights_.size() - 1) / spec_.feature_map->degree;
      case ModelSpec::Family::KernelExpansion:
        return anchors_->cols();
    }
    return 0;
  }

  Matrix design(const Matrix& x) const {
    if (x.cols() != input_dim()) {
      throw ValidationError("Model: input has dimension " +
                            std::to_string(x.cols()) + ", model expects " +
                            std::to_string(input_dim()));
    }
    return design_matrix(spec_, x, anchors_ ? *anchors_ : Matrix(0, x.cols()));
  }

  Vector predict(const Matrix& x) const { return design(x) * weights_; }

  bool differentiable() const { return true; }

  Vector input_gradient(const Vector& x) const {
    const Eigen::Index p = input_dim();
    Vector g = Vector::Zero(p);
    switch (spec_.family) {
      case ModelSpec::Family::Linear:
        g = weights_.tail(p);
        break;
      case ModelSpec::Family::FeatureMapLinear: {
        const int d = spec_.feature_map->degree;
        for (Eigen::Index c = 0; c < p; ++c) {
          double power = 1.0;  // x_c^(k-1)
          for (int k = 1; k <= d; ++k) {
            g(c) += k * weights_(1 + c * d + (k - 1)) * power;
            power *= x(c);
          }
        }
        break;
      }
      case ModelSpec::Family::KernelExpansion: {
        const KernelSpec& k = spec_.kernel;
        if (k.unit) break;
        const Matrix& a = *anchors_;
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
          Vector diff = x - a.row(j).transpose();
          if (k.metric.kind == MetricSpec::Kind::FairProjection) {
            diff = k.metric.projection * diff;
          }
          const double dist = diff.norm();
          const double kv = k.of_distance(dist);
          if (k.family == KernelSpec::Family::RBF) {
            g -= weights_(1 + j) * kv / (k.bandwidth * k.bandwidth) * diff;
          } else if (dist > 0.0) {
            g -= weights_(1 + j) * kv / (k.bandwidth * dist) * diff;
          }
        }
        break;
      }
    }
    return g;
  }

  // Slope vector for linear models (weights without the intercept).
  Vector slope() const {
    if (spec_.family != ModelSpec::Family::Linear) {
      throw UnsupportedOperation("Model: slope() is defined for linear models");
    }
    return weights_.tail(weights_.size() - 1);
  }

 private:
  ModelSpec spec_;
  Vector weights_;
  std::optional<Matrix> anchors_;
};

inline Json to_json(const ModelSpec& s) {
  Json j;
  j["family"] = to_string(s.family);
  j["ridge"] = s.ridge;
  if (s.feature_map) j["feature_map"] = {{"kind", "polynomial"}, {"degree", s.feature_map->degree}};
  if (s.family == ModelSpec::Family::KernelExpansion) j["kernel"] = to_json(s.kernel);
  return j;
}

inline ModelSpec model_spec_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path + ": expected an object");
  ModelSpec s;
  const std::string family = j.value("family", std::string("linear"));
  if (family == "linear") {
    s.family = ModelSpec::Family::Linear;
  } else if (family == "kernel_expansion") {
    s.family = ModelSpec::Family::KernelExpansion;
  } else if (family == "feature_map_linear" || family == "polynomial") {
    s.family = ModelSpec::Family::FeatureMapLinear;
  } else {
    throw ValidationError(path + ".family: unknown model family '" + family + "'");
  }
  if (j.contains("ridge")) {
    if (!j["ridge"].is_number()) throw ValidationError(path + ".ridge: expected a number");
    s.ridge = j["ridge"].get<double>();
    if (!(s.ridge >= 0.0)) throw ValidationError(path + ".ridge: must be >= 0");
  } else if (s.family == ModelSpec::Family::KernelExpansion) {
    s.ridge = 1e-8;
  }
  if (j.contains("feature_map")) {
    const Json& fm = j["feature_map"];
    if (!fm.is_object() || !fm.contains("degree") || !fm["degree"].is_number_integer()) {
      throw ValidationError(path + ".feature_map.degree: expected an integer");
    }
    s.feature_map = FeatureMap{fm["degree"].get<int>()};
    if (s.feature_map->degree < 1) {
      throw ValidationError(path + ".feature_map.degree: must be >= 1");
    }
  } else if (s.family == ModelSpec::Family::FeatureMapLinear) {
    throw ValidationError(path + ".feature_map: required for feature_map_linear");
  }
  if (j.contains("kernel")) s.kernel = kernel_from_json(j["kernel"], path + ".kernel");
  return s;
}

inline Json to_json(const Model& m) {
  Json j;
  j["family"] = to_string(m.spec().family);
  j["weights"] = to_json(m.weights());
  if (m.anchors()) j["anchors"] = to_json(*m.anchors());
  j["spec"] = to_json(m.spec());
  return j;
}

inline Model model_from_json(const Json& j, const std::string& path = "model") {
  if (!j.is_object() || !j.contains("spec") || !j.contains("weights")) {
    throw ValidationError(path + ": expected {family, weights, spec}");
  }
  ModelSpec spec = model_spec_from_json(j["spec"], path + ".spec");
  Vector w = vector_from_json(j["weights"], path + ".weights");
  std::optional<Matrix> anchors;
  if (j.contains("anchors")) anchors = matrix_from_json(j["anchors"], path + ".anchors");
  return Model(std::move(spec), std::move(w), std::move(anchors));
}

}  // namespace fairshift

#endif  // FAIRSHIFT_MODEL_HPP_
