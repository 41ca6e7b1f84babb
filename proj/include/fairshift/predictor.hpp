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

#ifndef FAIRSHIFT_PREDICTOR_HPP_
#define FAIRSHIFT_PREDICTOR_HPP_

#include <concepts>

#include "fairshift/linalg.hpp"

namespace fairshift {

// Anything that maps a feature matrix (one row per sample) to outputs.
template <typename F>
concept Predictor = requires(const F& f, const Matrix& x) {
  { f.predict(x) } -> std::convertible_to<Vector>;
};

// Predictors that also expose d f(x) / d x. `differentiable()` may still be
// false at runtime (e.g. a step regression function), in which case
// `input_gradient` throws UnsupportedOperation.
template <typename F>
concept DifferentiablePredictor =
    Predictor<F> && requires(const F& f, const Vector& x) {
      { f.input_gradient(x) } -> std::convertible_to<Vector>;
      { f.differentiable() } -> std::convertible_to<bool>;
    };

// Predictor evaluated on a linear representation: x -> inner(phi * x).
template <Predictor Inner>
class Composed {
 public:
  Composed(Inner inner, Matrix phi) : inner_(std::move(inner)), phi_(std::move(phi)) {}

  Vector predict(const Matrix& x) const {
    return inner_.predict(x * phi_.transpose());
  }

  const Matrix& representation() const { return phi_; }
  const Inner& inner() const { return inner_; }

 private:
  Inner inner_;
  Matrix phi_;
};

}  // namespace fairshift

#endif  // FAIRSHIFT_PREDICTOR_HPP_
