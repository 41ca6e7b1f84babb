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

#ifndef FAIRSHIFT_ALIGNMENT_HPP_
#define FAIRSHIFT_ALIGNMENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fairshift/bounds.hpp"
#include "fairshift/data.hpp"
#include "fairshift/json_util.hpp"
#include "fairshift/linalg.hpp"
#include "fairshift/predictor.hpp"
#include "fairshift/rng.hpp"

namespace fairshift {

// Entropic regularization eps = blur^2 with squared-Euclidean cost.
struct SinkhornConfig {
  double blur = 1.0;
  int max_iters = 2000;
  double tol = 1e-10;  // L1 violation of the row marginal

  void validate() const {
    if (!(blur > 0.0) || !std::isfinite(blur)) {
      throw ValidationError("SinkhornConfig: blur must be > 0");
    }
    if (max_iters < 1) throw ValidationError("SinkhornConfig: max_iters must be >= 1");
    if (!(tol > 0.0)) throw ValidationError("SinkhornConfig: tol must be > 0");
  }
  double epsilon() const { return blur * blur; }
};

// Entropic OT between uniform empirical measures on the rows of x and y.
// f, g are the dual potentials; the plan is
//   pi_ij = a_i b_j exp((f_i + g_j - C_ij) / eps) = u_i K_ij v_j.
struct EntropicOT {
  double value = 0.0;  // <a, f> + <b, g>
  Vector f;
  Vector g;
  int iterations = 0;
  double marginal_violation = 0.0;
  bool log_domain = false;
  // Scaling form (log_domain == false): K = exp(-C/eps), u, v.
  Matrix kernel;
  Vector u;
  Vector v;
  // Log-domain form keeps the plan itself when requested.
  Matrix plan;
};

inline Matrix squared_distances(const Matrix& x, const Matrix& y) {
  Matrix c(x.rows(), y.rows());
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double d = 0.0;
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        const double t = x(i, k) - y(j, k);
        d += t * t;
      }
      c(i, j) = d;
    }
  }
  return c;
}

namespace sinkhorn_detail {

// Upper bound on max_ij ||x_i - y_j||^2 from the clouds' bounding radii.
inline double cost_upper_bound(const Matrix& x, const Matrix& y) {
  const Eigen::RowVectorXd center = x.colwise().mean();
  const double rx = (x.rowwise() - center).rowwise().norm().maxCoeff();
  const double ry = (y.rowwise() - center).rowwise().norm().maxCoeff();
  return (rx + ry) * (rx + ry);
}

// K_ij = exp(-||x_i - y_j||^2 / eps), computed entrywise; symmetric inputs
// fill one triangle and mirror it.
inline Matrix gibbs_kernel(const Matrix& x, const Matrix& y, double eps, bool same) {
  const Eigen::Index n = x.rows(), m = y.rows(), p = x.cols();
  Matrix k(n, m);
  const Matrix xt = x.transpose();
  const Matrix yt = y.transpose();
  const double inv = -1.0 / eps;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double* yj = yt.col(j).data();
    const Eigen::Index top = same ? j + 1 : n;
    double* out = k.col(j).data();
    for (Eigen::Index i = 0; i < top; ++i) {
      const double* xi = xt.col(i).data();
      double d = 0.0;
      for (Eigen::Index c = 0; c < p; ++c) {
        const double t = xi[c] - yj[c];
        d += t * t;
      }
      out[i] = d * inv;
    }
  }
  if (same) {
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = j + 1; i < n; ++i) k(i, j) = k(j, i);
    }
  }
  k.array() = k.array().exp();
  return k;
}

inline Vector row_lse(const Matrix& m) {
  const Vector mx = m.rowwise().maxCoeff();
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out(i) = mx(i) + std::log((m.row(i).array() - mx(i)).exp().sum());
  }
  return out;
}

[[noreturn]] inline void not_converged(const SinkhornConfig& cfg, double viol, const char* form) {
  std::ostringstream msg;
  msg << "Sinkhorn" << form << " did not converge within " << cfg.max_iters
      << " iterations (marginal violation " << std::setprecision(3) << std::scientific << viol
      << ")";
  throw NumericError("alignment", msg.str());
}

// Scaling iterations u = a / (K v), v = b / (K' u). `iterations` is negative
// when the tolerance was not reached.
// A symmetric problem (same cloud on both sides) uses the averaged update
// u <- sqrt(u a / (K u)) and v = u, which avoids the slow oscillation of the
// alternating scheme.
inline EntropicOT solve_scaling(Matrix k, double eps, const SinkhornConfig& cfg,
                                bool symmetric = false) {
  const Eigen::Index n = k.rows(), m = k.cols();
  const double a = 1.0 / static_cast<double>(n), b = 1.0 / static_cast<double>(m);
  Vector u = Vector::Constant(n, a), v = Vector::Constant(m, b);
  int it = 0;
  double viol = std::numeric_limits<double>::infinity();
  while (it < cfg.max_iters) {
    if (symmetric) {
      u = (u.array() * (a / (k * u).array())).sqrt().matrix();
      v = u;
    } else {
      u = (a / (k * v).array()).matrix();
      v = (b / (k.transpose() * u).array()).matrix();
    }
    ++it;
    viol = (u.array() * (k * v).array() - a).abs().sum();
    if (!(viol > cfg.tol)) break;
  }
  EntropicOT r;
  r.marginal_violation = viol;
  if (!(viol <= cfg.tol) || !u.allFinite() || !v.allFinite() || (u.array() <= 0.0).any() ||
      (v.array() <= 0.0).any()) {
    r.iterations = -it;
    return r;
  }
  r.iterations = it;
  r.f = eps * (u.array() / a).log().matrix();
  r.g = eps * (v.array() / b).log().matrix();
  r.kernel = std::move(k);
  r.u = std::move(u);
  r.v = std::move(v);
  return r;
}

// Log-domain iterations with epsilon scaling: the regularization starts at
// the cost scale and halves down to eps, warm-starting each stage from the
// previous potentials.
inline EntropicOT solve_log(const Matrix& c, double eps, const SinkhornConfig& cfg,
                            bool want_plan, bool symmetric = false) {
  const Eigen::Index n = c.rows(), m = c.cols();
  const double la = -std::log(static_cast<double>(n)), lb = -std::log(static_cast<double>(m));
  Vector f = Vector::Zero(n), g = Vector::Zero(m);
  // (f_i + g_j - C_ij) / e
  auto scaled = [&](const Vector& fv, const Vector& gv, double e) {
    Matrix w = -c;
    w.colwise() += fv;
    w.rowwise() += gv.transpose();
    return Matrix(w / e);
  };
  const Vector zn = Vector::Zero(n), zm = Vector::Zero(m);
  auto sweep = [&](double e) {
    if (symmetric) {
      f = 0.5 * (f - e * (row_lse(scaled(zn, f, e)).array() + lb).matrix());
      g = f;
      return;
    }
    f = -e * (row_lse(scaled(zn, g, e)).array() + lb).matrix();
    g = -e * (row_lse(scaled(f, zm, e).transpose()).array() + la).matrix();
  };
  auto violation = [&](double e) {
    const Vector rows = (row_lse(scaled(f, g, e)).array() + la + lb).exp().matrix();
    return (rows.array() - std::exp(la)).abs().sum();
  };
  std::vector<double> stages;
  for (double e = std::max(eps, c.maxCoeff()); e > eps; e *= 0.5) stages.push_back(e);
  constexpr int kStageIters = 50;
  for (double e : stages) {
    for (int k = 0; k < kStageIters; ++k) sweep(e);
  }
  int it = 0;
  double viol = std::numeric_limits<double>::infinity();
  while (it < cfg.max_iters) {
    sweep(eps);
    ++it;
    viol = violation(eps);
    if (viol <= cfg.tol) break;
  }
  if (!(viol <= cfg.tol)) not_converged(cfg, viol, " (log domain)");
  EntropicOT r;
  r.log_domain = true;
  r.iterations = it;
  r.marginal_violation = viol;
  r.f = f;
  r.g = g;
  if (want_plan) r.plan = (scaled(f, g, eps).array() + la + lb).exp().matrix();
  return r;
}

}  // namespace sinkhorn_detail

// Scaling iterations when exp(-C/eps) cannot underflow and they converge;
// log-domain iterations otherwise.
inline EntropicOT entropic_ot(const Matrix& x, const Matrix& y, const SinkhornConfig& cfg,
                              bool want_plan = false, bool same_cloud = false) {
  cfg.validate();
  if (x.rows() == 0 || y.rows() == 0) {
    throw ValidationError("sinkhorn: point clouds must be nonempty");
  }
  if (x.cols() != y.cols()) {
    throw ValidationError("sinkhorn: point clouds have different dimensions");
  }
  same_cloud = same_cloud || (x.rows() == y.rows() && x == y);
  const double eps = cfg.epsilon();
  constexpr double kMaxExponent = 600.0;
  EntropicOT r;
  r.iterations = -1;
  if (sinkhorn_detail::cost_upper_bound(x, y) / eps <= kMaxExponent) {
    r = sinkhorn_detail::solve_scaling(sinkhorn_detail::gibbs_kernel(x, y, eps, same_cloud), eps,
                                       cfg, same_cloud);
  }
  if (r.iterations < 0) {
    const Matrix c = squared_distances(x, y);
    r = sinkhorn_detail::solve_log(c, eps, cfg, want_plan, same_cloud);
  }
  r.value = mean(r.f) + mean(r.g);
  return r;
}

// S = OT(a, b) - 1/2 OT(a, a) - 1/2 OT(b, b).
inline double sinkhorn_divergence(const Matrix& xs, const Matrix& ys, const SinkhornConfig& cfg) {
  const double ab = entropic_ot(xs, ys, cfg).value;
  const double aa = entropic_ot(xs, xs, cfg, false, true).value;
  const double bb = entropic_ot(ys, ys, cfg, false, true).value;
  return ab - 0.5 * aa - 0.5 * bb;
}

namespace sinkhorn_detail {

// d/dPhi sum_ij pi_ij ||Phi (x_i - y_j)||^2 with the plan held fixed,
//   2 [PX' diag(r) X - PX' pi Y - PY' pi' X + PY' diag(c) Y].
inline Matrix plan_gradient(const EntropicOT& ot, const Matrix& x, const Matrix& y,
                            const Matrix& px, const Matrix& py) {
  Vector r, c;
  Matrix plan_y, plan_t_x;
  if (ot.log_domain) {
    r = ot.plan.rowwise().sum();
    c = ot.plan.colwise().sum().transpose();
    plan_y = ot.plan * y;
    plan_t_x = ot.plan.transpose() * x;
  } else {
    r = ot.u.cwiseProduct(ot.kernel * ot.v);
    c = ot.v.cwiseProduct(ot.kernel.transpose() * ot.u);
    plan_y = ot.u.asDiagonal() * (ot.kernel * (ot.v.asDiagonal() * y));
    plan_t_x = ot.v.asDiagonal() * (ot.kernel.transpose() * (ot.u.asDiagonal() * x));
  }
  return 2.0 * (px.transpose() * r.asDiagonal() * x - px.transpose() * plan_y -
                py.transpose() * plan_t_x + py.transpose() * c.asDiagonal() * y);
}

}  // namespace sinkhorn_detail

struct DivergenceAndGradient {
  double value = 0.0;
  Matrix gradient;  // q x p
};

// S(Phi x1, Phi x0) and its gradient in Phi (envelope theorem on the duals).
inline DivergenceAndGradient sinkhorn_divergence_grad(const Matrix& phi, const Matrix& x1,
                                                      const Matrix& x0, const SinkhornConfig& cfg) {
  const Matrix p1 = x1 * phi.transpose();
  const Matrix p0 = x0 * phi.transpose();
  DivergenceAndGradient out;
  const EntropicOT ab = entropic_ot(p1, p0, cfg, true);
  out.gradient = sinkhorn_detail::plan_gradient(ab, x1, x0, p1, p0);
  out.value = ab.value;
  {
    const EntropicOT aa = entropic_ot(p1, p1, cfg, true, true);
    out.gradient -= 0.5 * sinkhorn_detail::plan_gradient(aa, x1, x1, p1, p1);
    out.value -= 0.5 * aa.value;
  }
  {
    const EntropicOT bb = entropic_ot(p0, p0, cfg, true, true);
    out.gradient -= 0.5 * sinkhorn_detail::plan_gradient(bb, x0, x0, p0, p0);
    out.value -= 0.5 * bb.value;
  }
  return out;
}

inline double sinkhorn_gradient_check(const Matrix& phi, const Matrix& x1, const Matrix& x0,
                                      const SinkhornConfig& cfg) {
  const DivergenceAndGradient at = sinkhorn_divergence_grad(phi, x1, x0, cfg);
  const Vector analytic = Eigen::Map<const Vector>(at.gradient.data(), at.gradient.size());
  const Vector flat = Eigen::Map<const Vector>(phi.data(), phi.size());
  const Vector numeric = central_difference(
      [&](const Vector& v) {
        const Matrix m = Eigen::Map<const Matrix>(v.data(), phi.rows(), phi.cols());
        return sinkhorn_divergence(x1 * m.transpose(), x0 * m.transpose(), cfg);
      },
      flat);
  return max_relative_error(analytic, numeric);
}

// Linear representation Phi in R^{q x p}.
class AlignmentMap {
 public:
  explicit AlignmentMap(Matrix matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() == 0 || matrix_.cols() == 0) {
      throw ValidationError("AlignmentMap: empty matrix");
    }
    if (!matrix_.allFinite()) throw ValidationError("AlignmentMap: non-finite entries");
    for (Eigen::Index i = 0; i < matrix_.rows(); ++i) {
      const double nrm = matrix_.row(i).norm();
      if (nrm < 1e-8 || nrm > 1e8) {
        throw ValidationError("AlignmentMap: row " + std::to_string(i) +
                              " norm outside [1e-8, 1e8]");
      }
    }
    Eigen::JacobiSVD<Matrix> svd(matrix_);
    const Vector s = svd.singularValues();
    if (s(s.size() - 1) < 1e-8 * s(0)) {
      throw ValidationError("AlignmentMap: matrix is not of full row rank");
    }
  }

  const Matrix& matrix() const { return matrix_; }
  Eigen::Index q() const { return matrix_.rows(); }
  Eigen::Index p() const { return matrix_.cols(); }
  Matrix apply(const Matrix& x) const { return x * matrix_.transpose(); }

 private:
  Matrix matrix_;
};

inline Json to_json(const AlignmentMap& m) {
  Json j;
  j["q"] = m.q();
  j["p"] = m.p();
  Json flat = Json::array();
  for (Eigen::Index i = 0; i < m.q(); ++i) {
    for (Eigen::Index k = 0; k < m.p(); ++k) flat.push_back(m.matrix()(i, k));
  }
  j["matrix"] = flat;
  return j;
}

inline AlignmentMap alignment_map_from_json(const Json& j) {
  const auto q = j.at("q").get<Eigen::Index>();
  const auto p = j.at("p").get<Eigen::Index>();
  const Vector flat = vector_from_json(j.at("matrix"), "matrix");
  if (flat.size() != q * p) throw ValidationError("AlignmentMap: matrix has wrong length");
  Matrix m(q, p);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) m(i, k) = flat(i * p + k);
  }
  return AlignmentMap(std::move(m));
}

// ||Phi b|| / (||Phi||_F ||b||).
inline double relative_phi_b(const Matrix& phi, const Vector& b) {
  return (phi * b).norm() / (phi.norm() * b.norm());
}

struct AlignmentConfig {
  int steps = 200;
  double step_size = 0.5;  // initial step; Barzilai-Borwein afterwards
  double penalty = 1.0;    // gamma in gamma ||Phi Phi' - I||_F^2
  double rel_tol = 1e-9;   // stop when the objective stalls
  double grad_tol = 1e-4;  // stop when ||grad|| <= grad_tol * ||grad_0||
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw ValidationError("AlignmentConfig: steps must be >= 0");
    if (!(step_size > 0.0)) throw ValidationError("AlignmentConfig: step_size must be > 0");
    if (!(penalty > 0.0)) throw ValidationError("AlignmentConfig: penalty must be > 0");
    if (!(grad_tol >= 0.0)) throw ValidationError("AlignmentConfig: grad_tol must be >= 0");
  }
};

struct AlignmentTrace {
  std::vector<double> divergence;
  std::vector<double> objective;
  std::vector<Matrix> maps;
};

struct AlignmentFit {
  AlignmentMap map;
  AlignmentTrace trace;
  bool converged = false;
};

// Random Gaussian q x p matrix with orthonormalized rows.
inline Matrix random_orthonormal_rows(Eigen::Index q, Eigen::Index p, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix g(p, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index i = 0; i < p; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix qm = qr.householderQ() * Matrix::Identity(p, q);
  // Fix signs so the factorization is unique.
  const Matrix rr = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q; ++j) {
    if (rr(j, j) < 0.0) qm.col(j) *= -1.0;
  }
  return qm.transpose();
}

namespace alignment_detail {

struct Eval {
  double divergence = 0.0;
  double objective = 0.0;
  Matrix gradient;
};

inline Eval evaluate(const Matrix& phi, const Matrix& x1, const Matrix& x0,
                     const SinkhornConfig& cfg, double gamma) {
  const DivergenceAndGradient dg = sinkhorn_divergence_grad(phi, x1, x0, cfg);
  const Matrix gram_err = phi * phi.transpose() - Matrix::Identity(phi.rows(), phi.rows());
  Eval e;
  e.divergence = dg.value;
  e.objective = dg.value + gamma * gram_err.squaredNorm();
  e.gradient = dg.gradient + 4.0 * gamma * gram_err * phi;
  if (!std::isfinite(e.objective) || !e.gradient.allFinite()) {
    throw NumericError("alignment", "alignment objective became non-finite");
  }
  return e;
}

}  // namespace alignment_detail

// Gradient descent on S(Phi x1, Phi x0) + gamma ||Phi Phi' - I||_F^2 from
// seeded orthonormal rows, with Barzilai-Borwein steps and Armijo
// backtracking; the objective trace is nonincreasing.
inline AlignmentFit fit_alignment(const Matrix& x1, const Matrix& x0, Eigen::Index q,
                                  const SinkhornConfig& sinkhorn, const AlignmentConfig& cfg) {
  sinkhorn.validate();
  cfg.validate();
  if (x1.rows() == 0 || x0.rows() == 0) {
    throw ValidationError("fit_alignment: both protected groups must be nonempty");
  }
  if (x1.cols() != x0.cols()) throw ValidationError("fit_alignment: group dimensions differ");
  const Eigen::Index p = x1.cols();
  if (q < 1 || q >= p) throw ValidationError("fit_alignment: need 1 <= q < p");

  Matrix phi = random_orthonormal_rows(q, p, cfg.seed);
  alignment_detail::Eval cur = alignment_detail::evaluate(phi, x1, x0, sinkhorn, cfg.penalty);
  AlignmentTrace trace;
  trace.divergence.push_back(cur.divergence);
  trace.objective.push_back(cur.objective);
  trace.maps.push_back(phi);
  double step = cfg.step_size;
  bool converged = false;
  Matrix prev_phi, prev_grad;
  int stalls = 0;
  const double g0 = cur.gradient.norm();
  for (int it = 0; it < cfg.steps; ++it) {
    if (it > 0) {
      const Matrix s = phi - prev_phi;
      const Matrix yv = cur.gradient - prev_grad;
      const double sy = (s.array() * yv.array()).sum();
      if (sy > 0.0) step = std::clamp(s.squaredNorm() / sy, 1e-6, 1e3);
    }
    const double g2 = cur.gradient.squaredNorm();
    if (g2 == 0.0 || std::sqrt(g2) <= cfg.grad_tol * g0) {
      converged = true;
      break;
    }
    bool accepted = false;
    alignment_detail::Eval next;
    Matrix trial;
    for (int k = 0; k < 40; ++k) {
      trial = phi - step * cur.gradient;
      next = alignment_detail::evaluate(trial, x1, x0, sinkhorn, cfg.penalty);
      if (next.objective <= cur.objective - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      converged = true;
      break;
    }
    const double improvement = cur.objective - next.objective;
    prev_phi = phi;
    prev_grad = cur.gradient;
    phi = trial;
    cur = next;
    trace.divergence.push_back(cur.divergence);
    trace.objective.push_back(cur.objective);
    trace.maps.push_back(phi);
    stalls = improvement <= cfg.rel_tol * std::max(1e-12, std::abs(cur.objective)) ? stalls + 1 : 0;
    if (stalls >= 3) {
      converged = true;
      break;
    }
  }
  return AlignmentFit{AlignmentMap(phi), std::move(trace), converged};
}

inline AlignmentFit fit_alignment(const Dataset& dataset, Eigen::Index q,
                                  const SinkhornConfig& sinkhorn, const AlignmentConfig& cfg) {
  const GroupSplit s = split_by_protected(dataset);
  return fit_alignment(s.protected_group, s.reference_group, q, sinkhorn, cfg);
}

// Spearman rank correlation, average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Surrogate for Phi b = 0: relative ||Phi b|| <= threshold, with the
// divergence between Phi X_1 and Phi X_0 on a fresh sample of n per group.
inline BoundReport verify_theorem4(const AlignmentMap& map, const FactorModelSpec& spec,
                                   Eigen::Index n, std::uint64_t seed, const SinkhornConfig& cfg,
                                   const AlignmentTrace* trace = nullptr,
                                   double threshold = 1e-2) {
  spec.validate();
  if (map.p() != spec.p()) throw ValidationError("verify_theorem4: map and spec dimensions differ");
  FactorModelSpec fresh = spec;
  fresh.seed = seed;
  const GroupSplit groups = split_by_protected(generate_factor_model_groups(fresh, n));
  const double rel = spec.protected_direction.norm() > 0.0
                         ? relative_phi_b(map.matrix(), spec.protected_direction)
                         : 0.0;
  BoundReport r;
  r.theorem = "T4";
  r.inequality = "||Phi b|| / (||Phi||_F ||b||) <= " + std::to_string(threshold) +
                 " (finite-sample surrogate of Phi b = 0)";
  r.seeds = {seed};
  r.lhs = rel;
  r.rhs_terms = {{"threshold", threshold}};
  r.quantities["divergence_fresh"] =
      sinkhorn_divergence(map.apply(groups.protected_group), map.apply(groups.reference_group), cfg);
  r.quantities["phi_b_norm"] = (map.matrix() * spec.protected_direction).norm();
  r.constants = {{"q", static_cast<double>(map.q())},
                 {"p", static_cast<double>(map.p())},
                 {"n_per_group", static_cast<double>(n)},
                 {"blur", cfg.blur},
                 {"b_norm", spec.protected_direction.norm()},
                 {"noise_sd", spec.noise_sd}};
  if (trace && !trace->maps.empty()) {
    std::vector<double> rels;
    for (const Matrix& m : trace->maps) rels.push_back(relative_phi_b(m, spec.protected_direction));
    r.quantities["trace_spearman"] = spearman(trace->divergence, rels);
    r.quantities["initial_divergence"] = trace->divergence.front();
    r.quantities["final_divergence"] = trace->divergence.back();
    r.quantities["initial_relative_phi_b"] = rels.front();
    r.quantities["divergence_reduction"] =
        trace->divergence.back() > 0.0 ? trace->divergence.front() / trace->divergence.back()
                                       : std::numeric_limits<double>::infinity();
  }
  r.finalize();
  return r;
}

struct ConsistencyReport {
  double classification = 1.0;  // fraction with sign(f(x)) == sign(f(flip x))
  double regression = 0.0;      // mean |f(x) - f(flip x)|
};

// Flip rule x -> x + (1 - 2z) b moves each row to the other protected group.
inline Matrix flip_protected(const Dataset& dataset, const Vector& b) {
  const Vector& z = dataset.protected_attribute();
  if (b.size() != dataset.dim()) throw ValidationError("flip_protected: b has wrong length");
  Matrix out = dataset.features();
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) += (1.0 - 2.0 * z(i)) * b.transpose();
  return out;
}

template <Predictor F>
ConsistencyReport prediction_consistency(const F& model, const Dataset& dataset, const Vector& b) {
  if (!dataset.has_protected()) {
    throw ValidationError("prediction_consistency: dataset has no protected attribute");
  }
  const Vector f = model.predict(dataset.features());
  const Vector g = model.predict(flip_protected(dataset, b));
  ConsistencyReport r;
  const Eigen::Index n = f.size();
  Eigen::Index same = 0;
  for (Eigen::Index i = 0; i < n; ++i) same += (f(i) > 0.0) == (g(i) > 0.0);
  r.classification = static_cast<double>(same) / static_cast<double>(n);
  r.regression = (f - g).cwiseAbs().mean();
  return r;
}

}  // namespace fairshift

#endif  // FAIRSHIFT_ALIGNMENT_HPP_
