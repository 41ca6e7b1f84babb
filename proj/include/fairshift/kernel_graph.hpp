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

#ifndef FAIRSHIFT_KERNEL_GRAPH_HPP_
#define FAIRSHIFT_KERNEL_GRAPH_HPP_

#include <cmath>
#include <string>

#include "fairshift/data.hpp"
#include "fairshift/linalg.hpp"

namespace fairshift {

// Euclidean distance, or ||P (x - x')|| for a symmetric idempotent P that
// projects out sensitive directions.
struct MetricSpec {
  enum class Kind { Euclidean, FairProjection };
  Kind kind = Kind::Euclidean;
  Matrix projection;

  static MetricSpec euclidean() { return {}; }
  static MetricSpec fair_projection(Matrix p) {
    MetricSpec m{Kind::FairProjection, std::move(p)};
    m.validate();
    return m;
  }
  // Projection onto the orthogonal complement of span(directions).
  static MetricSpec removing(const Matrix& directions) {
    const Eigen::Index p = directions.rows();
    Eigen::HouseholderQR<Matrix> qr(directions);
    const Matrix q = qr.householderQ() * Matrix::Identity(p, directions.cols());
    Matrix proj = Matrix::Identity(p, p) - q * q.transpose();
    proj = 0.5 * (proj + proj.transpose()).eval();
    return fair_projection(std::move(proj));
  }

  void validate() const {
    if (kind != Kind::FairProjection) return;
    if (projection.rows() == 0 || projection.rows() != projection.cols()) {
      throw ValidationError("MetricSpec: projection must be a non-empty square "
                            "matrix");
    }
    if ((projection - projection.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
      throw ValidationError("MetricSpec: projection is not symmetric");
    }
    if ((projection * projection - projection).cwiseAbs().maxCoeff() > 1e-10) {
      throw ValidationError("MetricSpec: projection is not idempotent");
    }
  }

  void check_dimension(Eigen::Index p) const {
    if (kind == Kind::FairProjection && projection.rows() != p) {
      throw ValidationError("MetricSpec: projection is " +
                            std::to_string(projection.rows()) + "x" +
                            std::to_string(projection.rows()) +
                            " but features have dimension " + std::to_string(p));
    }
  }

  // Rows mapped into the space where the metric is Euclidean.
  Matrix embed(const Matrix& x) const {
    if (kind == Kind::Euclidean) return x;
    return x * projection;  // projection is symmetric
  }

  double distance(const Vector& x, const Vector& y) const {
    if (x.size() != y.size()) {
      throw ValidationError("MetricSpec: vectors of unequal length");
    }
    if (kind == Kind::Euclidean) return (x - y).norm();
    check_dimension(x.size());
    return (projection * (x - y)).norm();
  }
};

struct KernelSpec {
  enum class Family { RBF, Laplace };
  Family family = Family::RBF;
  double bandwidth = 1.0;
  MetricSpec metric;
  // Infinite-bandwidth limit: K == 1 everywhere.
  bool unit = false;

  static KernelSpec rbf(double bandwidth, MetricSpec metric = {}) {
    return KernelSpec{Family::RBF, bandwidth, std::move(metric), false};
  }
  static KernelSpec laplace(double bandwidth, MetricSpec metric = {}) {
    return KernelSpec{Family::Laplace, bandwidth, std::move(metric), false};
  }
  static KernelSpec constant_one() {
    return KernelSpec{Family::RBF, 1.0, {}, true};
  }

  void validate() const {
    if (!unit && !(bandwidth > 0.0 && std::isfinite(bandwidth))) {
      throw ValidationError("KernelSpec: bandwidth must be a positive finite "
                            "number");
    }
    metric.validate();
  }

  // Kernel as a function of the metric distance.
  double of_distance(double d) const {
    if (unit) return 1.0;
    if (family == Family::RBF) {
      return std::exp(-d * d / (2.0 * bandwidth * bandwidth));
    }
    return std::exp(-d / bandwidth);
  }
};

inline const char* to_string(KernelSpec::Family f) {
  return f == KernelSpec::Family::RBF ? "rbf" : "laplace";
}

inline double kernel_value(const KernelSpec& k, const Vector& x, const Vector& y) {
  k.validate();
  return k.of_distance(k.metric.distance(x, y));
}

// K_ij = k(x_i, y_j). Each entry depends only on its own pair of rows.
inline Matrix gram(const KernelSpec& k, const Matrix& x, const Matrix& y) {
  k.validate();
  if (x.cols() != y.cols()) {
    throw ValidationError("gram: feature dimensions differ (" +
                          std::to_string(x.cols()) + " vs " +
                          std::to_string(y.cols()) + ")");
  }
  k.metric.check_dimension(x.cols());
  if (k.unit) return Matrix::Ones(x.rows(), y.rows());
  const Matrix ex = k.metric.embed(x);
  const Matrix ey = k.metric.embed(y);
  Matrix out(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < ey.rows(); ++j) {
    const Eigen::ArrayXd d2 =
        (ex.rowwise() - ey.row(j)).rowwise().squaredNorm().array();
    // std::exp underflows to exactly 0; Eigen's vectorized exp does not.
    const auto e = [](double v) { return std::exp(v); };
    if (k.family == KernelSpec::Family::RBF) {
      out.col(j) = (-d2 / (2.0 * k.bandwidth * k.bandwidth)).unaryExpr(e).matrix();
    } else {
      out.col(j) = (-d2.sqrt() / k.bandwidth).unaryExpr(e).matrix();
    }
  }
  return out;
}

inline Matrix gram(const KernelSpec& k, const Matrix& x) { return gram(k, x, x); }

inline constexpr double kDisconnectedThreshold = 1e-12;

struct RegularizerConstants {
  double mu_R = 0.0;   // lambda_min(L_TT)
  double L_R = 0.0;    // lambda_max(L)
  bool disconnected = false;
};

// Similarity graph over [source; target] with unnormalized Laplacian
// L = D - K. Source rows come first.
class LaplacianGraph {
 public:
  // Takes ownership of a symmetric nonnegative kernel matrix whose first
  // n_source rows are the source points.
  static LaplacianGraph from_kernel(Matrix kernel, Eigen::Index n_source) {
    const Eigen::Index n = kernel.rows();
    if (kernel.cols() != n) {
      throw ValidationError("LaplacianGraph: kernel matrix must be square");
    }
    if (n < 2) {
      throw ValidationError("LaplacianGraph: need n_source + n_target >= 2");
    }
    if (n_source < 0 || n_source > n) {
      throw ValidationError("LaplacianGraph: n_source out of range");
    }
    if (!kernel.allFinite()) {
      throw ValidationError("LaplacianGraph: kernel has non-finite entries");
    }
    if ((kernel - kernel.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ValidationError("LaplacianGraph: kernel matrix is not symmetric");
    }
    if (kernel.minCoeff() < 0.0) {
      throw ValidationError("LaplacianGraph: kernel has negative entries");
    }
    LaplacianGraph g;
    g.n_source_ = n_source;
    g.n_target_ = n - n_source;
    g.degree_ = kernel.rowwise().sum();
    g.laplacian_ = -kernel;
    // Diagonal set from off-diagonal sums so that L 1 = 0 holds to rounding
    // of a single row sum.
    for (Eigen::Index i = 0; i < n; ++i) {
      g.laplacian_(i, i) = 0.0;
      g.laplacian_(i, i) = -g.laplacian_.row(i).sum();
    }
    g.kernel_ = std::move(kernel);
    g.laplacian_ = 0.5 * (g.laplacian_ + g.laplacian_.transpose()).eval();
    g.L_R_ = symmetric_spectrum(g.laplacian_, "kernel_graph").max;
    if (g.n_target_ > 0) {
      g.mu_R_ = symmetric_spectrum(g.L_TT(), "kernel_graph").min;
    }
    return g;
  }

  Eigen::Index size() const { return kernel_.rows(); }
  Eigen::Index n_source() const { return n_source_; }
  Eigen::Index n_target() const { return n_target_; }

  const Matrix& kernel_matrix() const { return kernel_; }
  const Vector& degree() const { return degree_; }
  const Matrix& laplacian() const { return laplacian_; }

  Matrix L_SS() const { return laplacian_.topLeftCorner(n_source_, n_source_); }
  Matrix L_ST() const { return laplacian_.topRightCorner(n_source_, n_target_); }
  Matrix L_TS() const { return laplacian_.bottomLeftCorner(n_target_, n_source_); }
  Matrix L_TT() const { return laplacian_.bottomRightCorner(n_target_, n_target_); }

  double mu_R() const { return mu_R_; }
  double L_R() const { return L_R_; }
  bool disconnected() const { return mu_R_ <= kDisconnectedThreshold; }

  RegularizerConstants constants() const { return {mu_R_, L_R_, disconnected()}; }

 private:
  LaplacianGraph() = default;

  Matrix kernel_;
  Vector degree_;
  Matrix laplacian_;
  Eigen::Index n_source_ = 0;
  Eigen::Index n_target_ = 0;
  double mu_R_ = 0.0;
  double L_R_ = 0.0;
};

inline LaplacianGraph build_graph(const Matrix& source, const Matrix& target,
                                  const KernelSpec& kernel) {
  if (source.rows() > 0 && target.rows() > 0 && source.cols() != target.cols()) {
    throw ValidationError("build_graph: source has dimension " +
                          std::to_string(source.cols()) + " but target has " +
                          std::to_string(target.cols()));
  }
  if (source.rows() + target.rows() < 2) {
    throw ValidationError("build_graph: need n_source + n_target >= 2");
  }
  const Matrix pooled = vstack(source, target);
  return LaplacianGraph::from_kernel(gram(kernel, pooled), source.rows());
}

inline LaplacianGraph build_graph(const Dataset& source, const Dataset& target,
                                  const KernelSpec& kernel) {
  return build_graph(source.features(), target.features(), kernel);
}

inline RegularizerConstants regularizer_constants(const LaplacianGraph& graph) {
  return graph.constants();
}

}  // namespace fairshift

#endif  // FAIRSHIFT_KERNEL_GRAPH_HPP_
