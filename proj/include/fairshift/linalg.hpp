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

#ifndef FAIRSHIFT_LINALG_HPP_
#define FAIRSHIFT_LINALG_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fairshift/errors.hpp"

namespace fairshift {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SymmetricSpectrum {
  double min = 0.0;
  double max = 0.0;
  Vector min_vector;
  Vector max_vector;
};

// Extreme eigenpairs of a dense symmetric matrix. O(n^3). Throws
// NumericError if the QR iteration does not converge or an eigenpair
// residual exceeds 1e-8 * ||M||.
inline SymmetricSpectrum symmetric_spectrum(const Matrix& m,
                                            const std::string& module) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ValidationError(module + ": symmetric_spectrum needs a non-empty "
                                   "square matrix");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    // Eigen's tridiagonal QR gives up after 30 * n sweeps.
    throw NumericError(module, "symmetric eigensolver did not converge within " +
                                   std::to_string(30 * m.rows()) +
                                   " iterations");
  }
  SymmetricSpectrum s;
  const Eigen::Index last = m.rows() - 1;
  s.min = solver.eigenvalues()(0);
  s.max = solver.eigenvalues()(last);
  s.min_vector = solver.eigenvectors().col(0);
  s.max_vector = solver.eigenvectors().col(last);
  const double scale = std::max(1e-300, m.cwiseAbs().maxCoeff() *
                                            static_cast<double>(m.rows()));
  const double r_min = (m * s.min_vector - s.min * s.min_vector).norm();
  const double r_max = (m * s.max_vector - s.max * s.max_vector).norm();
  if (std::max(r_min, r_max) > 1e-8 * scale) {
    throw NumericError(module, "eigenpair residual " +
                                   std::to_string(std::max(r_min, r_max)) +
                                   " exceeds 1e-8 * ||M||");
  }
  return s;
}

// max_i |a_i - b_i| / max(||b||_inf, floor). Normwise so entries near zero
// do not dominate.
inline double max_relative_error(const Vector& analytic, const Vector& reference,
                                 double floor = 1e-12) {
  if (analytic.size() != reference.size()) {
    throw ValidationError("max_relative_error: length mismatch");
  }
  if (analytic.size() == 0) return 0.0;
  const double denom = std::max(reference.cwiseAbs().maxCoeff(), floor);
  return (analytic - reference).cwiseAbs().maxCoeff() / denom;
}

// Central differences of a scalar function, step h_i = h * max(1, |x_i|).
template <typename Fn>
Vector central_difference(Fn&& fn, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    probe(i) = x(i) + step;
    const double up = fn(probe);
    probe(i) = x(i) - step;
    const double down = fn(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * step);
  }
  return g;
}

// Pairwise (cascade) summation: the result depends only on the order of
// the input, never on how callers chunk the work.
inline double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

inline double pairwise_sum(const Vector& v) {
  return pairwise_sum(v.data(), static_cast<std::size_t>(v.size()));
}

inline double mean(const Vector& v) {
  if (v.size() == 0) return 0.0;
  return pairwise_sum(v) / static_cast<double>(v.size());
}

// Sample standard error of the mean.
inline double standard_error(const Vector& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double m = mean(v);
  const Vector centered = (v.array() - m).square().matrix();
  const double var = pairwise_sum(centered) / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

inline Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.rows() > 0 && bottom.rows() > 0 && top.cols() != bottom.cols()) {
    throw ValidationError("vstack: column mismatch");
  }
  Matrix out(top.rows() + bottom.rows(),
             top.rows() > 0 ? top.cols() : bottom.cols());
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  if (bottom.rows() > 0) out.bottomRows(bottom.rows()) = bottom;
  return out;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace fairshift

#endif  // FAIRSHIFT_LINALG_HPP_
