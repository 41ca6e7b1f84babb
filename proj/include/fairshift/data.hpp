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

#ifndef FAIRSHIFT_DATA_HPP_
#define FAIRSHIFT_DATA_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "fairshift/errors.hpp"
#include "fairshift/linalg.hpp"
#include "fairshift/rng.hpp"

namespace fairshift {

enum class Domain { Source, Target };

// HeldOut labels exist for evaluation only; training entry points call
// training_labels(), which refuses them.
enum class LabelRole { Training, HeldOut };

inline const char* to_string(Domain d) {
  return d == Domain::Source ? "source" : "target";
}

// Immutable feature matrix with optional labels and protected attribute.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(Matrix features, Domain domain = Domain::Source,
                   std::optional<Vector> labels = std::nullopt,
                   std::optional<Vector> protected_attr = std::nullopt,
                   LabelRole role = LabelRole::Training)
      : features_(std::move(features)),
        labels_(std::move(labels)),
        protected_(std::move(protected_attr)),
        domain_(domain),
        role_(role) {
    if (!features_.allFinite()) {
      throw ValidationError("Dataset: features contain non-finite entries");
    }
    if (labels_) {
      if (labels_->size() != features_.rows()) {
        throw ValidationError("Dataset: labels length " +
                              std::to_string(labels_->size()) +
                              " != row count " +
                              std::to_string(features_.rows()));
      }
      if (!labels_->allFinite()) {
        throw ValidationError("Dataset: labels contain non-finite entries");
      }
    }
    if (protected_) {
      if (protected_->size() != features_.rows()) {
        throw ValidationError("Dataset: protected attribute length mismatch");
      }
      for (Eigen::Index i = 0; i < protected_->size(); ++i) {
        const double z = (*protected_)(i);
        if (z != 0.0 && z != 1.0) {
          throw ValidationError("Dataset: protected attribute must be 0 or 1 "
                                "(row " + std::to_string(i) + ")");
        }
      }
    }
  }

  Eigen::Index rows() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  bool empty() const { return features_.rows() == 0; }

  const Matrix& features() const { return features_; }
  Domain domain() const { return domain_; }
  LabelRole label_role() const { return role_; }

  bool has_labels() const { return labels_.has_value(); }
  bool has_protected() const { return protected_.has_value(); }

  // All labels, including held-out ones. For evaluation code.
  const Vector& labels() const {
    if (!labels_) throw ValidationError("Dataset: no labels");
    return *labels_;
  }

  const Vector& training_labels() const {
    if (!labels_) throw ValidationError("Dataset: no labels");
    if (role_ == LabelRole::HeldOut) {
      throw ValidationError("Dataset: labels are held out and may not be "
                            "used for training");
    }
    return *labels_;
  }

  const Vector& protected_attribute() const {
    if (!protected_) throw ValidationError("Dataset: no protected attribute");
    return *protected_;
  }

  const std::optional<Vector>& maybe_labels() const { return labels_; }
  const std::optional<Vector>& maybe_protected() const { return protected_; }

  Dataset with_role(LabelRole role) const {
    return Dataset(features_, domain_, labels_, protected_, role);
  }
  Dataset with_domain(Domain domain) const {
    return Dataset(features_, domain, labels_, protected_, role_);
  }
  Dataset without_labels() const {
    return Dataset(features_, domain_, std::nullopt, protected_, role_);
  }

 private:
  Matrix features_ = Matrix(0, 0);
  std::optional<Vector> labels_;
  std::optional<Vector> protected_;
  Domain domain_ = Domain::Source;
  LabelRole role_ = LabelRole::Training;
};

// Regression-function catalog for synthetic targets f_0. Output is
//   scale * base(x) + offset
// where base is one of the catalog shapes; scale/offset make posterior
// drift instances (f_t = 2 f_s, f_t = f_s + c) expressible.
class RegressionFunction {
 public:
  enum class Kind { Linear, Sine, Step, Quadratic };

  static RegressionFunction linear(Vector weights, double intercept = 0.0) {
    RegressionFunction f(Kind::Linear);
    f.weights_ = std::move(weights);
    f.intercept_ = intercept;
    return f;
  }
  static RegressionFunction sine(double frequency, double amplitude = 1.0,
                                 int coordinate = 0) {
    RegressionFunction f(Kind::Sine);
    f.frequency_ = frequency;
    f.amplitude_ = amplitude;
    f.coordinate_ = coordinate;
    return f;
  }
  static RegressionFunction step(double threshold, double amplitude = 1.0,
                                 int coordinate = 0) {
    RegressionFunction f(Kind::Step);
    f.threshold_ = threshold;
    f.amplitude_ = amplitude;
    f.coordinate_ = coordinate;
    return f;
  }
  // coefficient * x_c^2
  static RegressionFunction quadratic(double coefficient = 1.0,
                                      int coordinate = 0) {
    RegressionFunction f(Kind::Quadratic);
    f.amplitude_ = coefficient;
    f.coordinate_ = coordinate;
    return f;
  }

  RegressionFunction scaled(double c) const {
    RegressionFunction f = *this;
    f.scale_ *= c;
    f.offset_ *= c;
    return f;
  }
  RegressionFunction shifted(double c) const {
    RegressionFunction f = *this;
    f.offset_ += c;
    return f;
  }

  Kind kind() const { return kind_; }
  const Vector& weights() const { return weights_; }
  double intercept() const { return intercept_; }
  double frequency() const { return frequency_; }
  double amplitude() const { return amplitude_; }
  double threshold() const { return threshold_; }
  int coordinate() const { return coordinate_; }
  double scale() const { return scale_; }
  double offset() const { return offset_; }

  // Validates against a feature dimension.
  void check_dimension(Eigen::Index p) const {
    if (kind_ == Kind::Linear) {
      if (weights_.size() != p) {
        throw ValidationError("RegressionFunction: linear weights length " +
                              std::to_string(weights_.size()) +
                              " != feature dimension " + std::to_string(p));
      }
    } else if (coordinate_ < 0 || coordinate_ >= p) {
      throw ValidationError("RegressionFunction: coordinate " +
                            std::to_string(coordinate_) + " out of range");
    }
  }

  double value(const Eigen::Ref<const Vector>& x) const {
    return scale_ * base(x) + offset_;
  }

  Vector predict(const Matrix& x) const {
    check_dimension(x.cols());
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out(i) = value(x.row(i).transpose());
    }
    return out;
  }

  bool differentiable() const { return kind_ != Kind::Step; }

  Vector input_gradient(const Vector& x) const {
    Vector g = Vector::Zero(x.size());
    switch (kind_) {
      case Kind::Linear:
        g = weights_;
        break;
      case Kind::Sine:
        g(coordinate_) =
            amplitude_ * frequency_ * std::cos(frequency_ * x(coordinate_));
        break;
      case Kind::Quadratic:
        g(coordinate_) = 2.0 * amplitude_ * x(coordinate_);
        break;
      case Kind::Step:
        throw UnsupportedOperation(
            "RegressionFunction: step function has no input gradient");
    }
    return scale_ * g;
  }

 private:
  explicit RegressionFunction(Kind kind) : kind_(kind) {}

  double base(const Eigen::Ref<const Vector>& x) const {
    switch (kind_) {
      case Kind::Linear:
        return weights_.dot(x) + intercept_;
      case Kind::Sine:
        return amplitude_ * std::sin(frequency_ * x(coordinate_));
      case Kind::Step:
        return x(coordinate_) > threshold_ ? amplitude_ : 0.0;
      case Kind::Quadratic:
        return amplitude_ * x(coordinate_) * x(coordinate_);
    }
    return 0.0;
  }

  Kind kind_;
  Vector weights_;
  double intercept_ = 0.0;
  double frequency_ = 1.0;
  double amplitude_ = 1.0;
  double threshold_ = 0.0;
  int coordinate_ = 0;
  double scale_ = 1.0;
  double offset_ = 0.0;
};

// Multivariate normal input law.
struct GaussianLaw {
  Vector mean;
  Matrix covariance;

  Eigen::Index dim() const { return mean.size(); }

  void validate(const std::string& name) const {
    if (mean.size() == 0) throw ValidationError(name + ": empty mean");
    if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
      throw ValidationError(name + ": covariance must be " +
                            std::to_string(mean.size()) + "x" +
                            std::to_string(mean.size()));
    }
    if (!mean.allFinite() || !covariance.allFinite()) {
      throw ValidationError(name + ": non-finite parameters");
    }
    const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * scale) {
      throw ValidationError(name + ": covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
    if (es.eigenvalues()(0) < -1e-10 * scale) {
      throw ValidationError(name + ": covariance is not positive semidefinite "
                            "(min eigenvalue " +
                            std::to_string(es.eigenvalues()(0)) + ")");
    }
  }

  // Symmetric square root; works for singular PSD covariances.
  Matrix sqrt_covariance() const {
    Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() *
           es.eigenvectors().transpose();
  }

  // n draws, one per row. Normals are consumed row-major.
  Matrix sample(SplitMix64& rng, Eigen::Index n) const {
    const Eigen::Index d = dim();
    Matrix z(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
    }
    Matrix x = z * sqrt_covariance();  // root is symmetric
    x.rowwise() += mean.transpose();
    return x;
  }
};

inline GaussianLaw isotropic_law(Vector mean, double sd) {
  const Eigen::Index d = mean.size();
  return GaussianLaw{std::move(mean), Matrix::Identity(d, d) * (sd * sd)};
}

struct CovariateShiftSpec {
  RegressionFunction regression_fn = RegressionFunction::sine(2.0);
  GaussianLaw source_law;
  GaussianLaw target_law;
  double noise_sd_source = 0.1;
  double noise_sd_target = 0.1;
  std::uint64_t seed = 0;
  // When set, z_i = 1[x_ic > 0] is stored as the protected attribute.
  std::optional<int> protected_coordinate;

  void validate() const {
    source_law.validate("source_law");
    target_law.validate("target_law");
    if (source_law.dim() != target_law.dim()) {
      throw ValidationError("CovariateShiftSpec: source and target laws differ "
                            "in dimension");
    }
    if (!(noise_sd_source >= 0.0) || !(noise_sd_target >= 0.0)) {
      throw ValidationError("CovariateShiftSpec: noise_sd must be >= 0");
    }
    regression_fn.check_dimension(source_law.dim());
    if (protected_coordinate &&
        (*protected_coordinate < 0 || *protected_coordinate >= source_law.dim())) {
      throw ValidationError("CovariateShiftSpec: protected_coordinate out of "
                            "range");
    }
  }
};

namespace detail {

inline Dataset draw_domain(const GaussianLaw& law, const RegressionFunction& f,
                           double noise_sd, Eigen::Index n, Domain domain,
                           LabelRole role, const std::optional<int>& protected_coord,
                           std::uint64_t feature_seed, std::uint64_t noise_seed) {
  SplitMix64 feature_rng(feature_seed);
  SplitMix64 noise_rng(noise_seed);
  Matrix x = law.sample(feature_rng, n);
  Vector y = f.predict(x);
  for (Eigen::Index i = 0; i < n; ++i) y(i) += noise_sd * noise_rng.normal();
  std::optional<Vector> z;
  if (protected_coord) {
    z = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      (*z)(i) = x(i, *protected_coord) > 0.0 ? 1.0 : 0.0;
    }
  }
  return Dataset(std::move(x), domain, std::move(y), std::move(z), role);
}

}  // namespace detail

// Source and target draws of y = f(x) + noise with f_source on the source
// domain and f_target on the target domain. Target labels are HeldOut.
inline std::pair<Dataset, Dataset> generate_domains(
    const CovariateShiftSpec& spec, const RegressionFunction& f_source,
    const RegressionFunction& f_target, Eigen::Index n_source,
    Eigen::Index n_target) {
  spec.validate();
  f_target.check_dimension(spec.target_law.dim());
  if (n_source < 1 || n_target < 1) {
    throw ValidationError("generate_covariate_shift: n_source and n_target "
                          "must be >= 1");
  }
  Dataset source = detail::draw_domain(
      spec.source_law, f_source, spec.noise_sd_source, n_source, Domain::Source,
      LabelRole::Training, spec.protected_coordinate,
      derive_seed(spec.seed, 0), derive_seed(spec.seed, 1));
  Dataset target = detail::draw_domain(
      spec.target_law, f_target, spec.noise_sd_target, n_target, Domain::Target,
      LabelRole::HeldOut, spec.protected_coordinate,
      derive_seed(spec.seed, 2), derive_seed(spec.seed, 3));
  return {std::move(source), std::move(target)};
}

inline std::pair<Dataset, Dataset> generate_covariate_shift(
    const CovariateShiftSpec& spec, Eigen::Index n_source,
    Eigen::Index n_target) {
  return generate_domains(spec, spec.regression_fn, spec.regression_fn,
                          n_source, n_target);
}

// Optional labels for factor-model data:
//   y = weights . U + bias * (2Z - 1) + noise_sd * N(0, 1)
// A nonzero bias plants a label dependence on the protected attribute.
struct FactorLabels {
  Vector weights;
  double bias = 0.0;
  double noise_sd = 0.0;
};

// X = A U + b Z + eps with U ~ u_law, Z ~ Bernoulli, eps ~ N(0, noise_sd^2 I).
struct FactorModelSpec {
  Matrix loading;             // p x k
  Vector protected_direction; // p
  double noise_sd = 0.1;
  GaussianLaw u_law;          // k-dimensional
  std::uint64_t seed = 0;
  std::optional<FactorLabels> labels;

  Eigen::Index p() const { return loading.rows(); }
  Eigen::Index k() const { return loading.cols(); }

  void validate() const {
    if (loading.rows() == 0 || loading.cols() == 0) {
      throw ValidationError("FactorModelSpec: loading must be non-empty");
    }
    if (protected_direction.size() != loading.rows()) {
      throw ValidationError("FactorModelSpec: protected_direction has length " +
                            std::to_string(protected_direction.size()) +
                            " but loading has " +
                            std::to_string(loading.rows()) + " rows");
    }
    if (!(noise_sd >= 0.0)) {
      throw ValidationError("FactorModelSpec: noise_sd must be >= 0");
    }
    u_law.validate("u_law");
    if (u_law.dim() != loading.cols()) {
      throw ValidationError("FactorModelSpec: u_law dimension " +
                            std::to_string(u_law.dim()) + " != loading columns " +
                            std::to_string(loading.cols()));
    }
    if (labels && labels->weights.size() != loading.cols()) {
      throw ValidationError("FactorModelSpec: label weights must have length k");
    }
  }
};

namespace detail {

// With `paired_u` the first and second halves of the rows share their U draws.
inline Dataset draw_factor_rows(const FactorModelSpec& spec, const Vector& z,
                                bool paired_u = false) {
  const Eigen::Index n = z.size();
  SplitMix64 u_rng(derive_seed(spec.seed, 10));
  SplitMix64 eps_rng(derive_seed(spec.seed, 12));
  SplitMix64 label_rng(derive_seed(spec.seed, 13));
  Matrix u;
  if (paired_u) {
    const Matrix half = spec.u_law.sample(u_rng, n / 2);
    u = vstack(half, half);
  } else {
    u = spec.u_law.sample(u_rng, n);
  }
  Matrix x = u * spec.loading.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < spec.p(); ++j) {
      x(i, j) += spec.protected_direction(j) * z(i) +
                 spec.noise_sd * eps_rng.normal();
    }
  }
  std::optional<Vector> y;
  if (spec.labels) {
    Vector labels = u * spec.labels->weights;
    for (Eigen::Index i = 0; i < n; ++i) {
      labels(i) += spec.labels->bias * (2.0 * z(i) - 1.0) +
                   spec.labels->noise_sd * label_rng.normal();
    }
    y = std::move(labels);
  }
  return Dataset(std::move(x), Domain::Source, std::move(y), z);
}

}  // namespace detail

// n rows with Z ~ Bernoulli(z_balance).
inline Dataset generate_factor_model(const FactorModelSpec& spec, Eigen::Index n,
                                     double z_balance) {
  spec.validate();
  if (!(z_balance > 0.0 && z_balance < 1.0)) {
    throw ValidationError("generate_factor_model: z_balance must lie in (0, 1)");
  }
  if (n < 1) throw ValidationError("generate_factor_model: n must be >= 1");
  SplitMix64 z_rng(derive_seed(spec.seed, 11));
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = z_rng.bernoulli(z_balance) ? 1.0 : 0.0;
  return detail::draw_factor_rows(spec, z);
}

// Exactly n_per_group rows per group: the Z = 1 rows first, then Z = 0.
// `paired_u` reuses the same U draws in both groups (common random numbers),
// so the groups differ only through b and the noise.
inline Dataset generate_factor_model_groups(const FactorModelSpec& spec,
                                            Eigen::Index n_per_group,
                                            bool paired_u = false) {
  spec.validate();
  if (n_per_group < 1) {
    throw ValidationError("generate_factor_model_groups: n_per_group must be >= 1");
  }
  Vector z(2 * n_per_group);
  z.head(n_per_group).setOnes();
  z.tail(n_per_group).setZero();
  return detail::draw_factor_rows(spec, z, paired_u);
}

struct GroupSplit {
  Matrix protected_group;  // Z = 1
  Matrix reference_group;  // Z = 0
};

inline GroupSplit split_by_protected(const Dataset& d) {
  const Vector& z = d.protected_attribute();
  const Eigen::Index n1 = static_cast<Eigen::Index>(z.sum());
  GroupSplit s{Matrix(n1, d.dim()), Matrix(d.rows() - n1, d.dim())};
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (z(i) == 1.0) {
      s.protected_group.row(a++) = d.features().row(i);
    } else {
      s.reference_group.row(b++) = d.features().row(i);
    }
  }
  return s;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_DATA_HPP_
