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

#ifndef FAIRSHIFT_ERRORS_HPP_
#define FAIRSHIFT_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fairshift {

// Invalid inputs: bad shapes, broken invariants, malformed configs.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what)
      : std::invalid_argument(what) {}
};

// CSV / config parse failures. `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " +
                                           what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Failures of a numerical routine. `module` names the subsystem that raised
// it so the CLI can report it (exit code 3).
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}
  const std::string& module() const { return module_; }

 private:
  std::string module_;
};

// L_TT singular: the source/target similarity graph is disconnected.
class DisconnectedGraphError : public NumericError {
 public:
  DisconnectedGraphError(const std::string& module, double mu_r)
      : NumericError(module, "disconnected graph: mu_R = " +
                                 std::to_string(mu_r) +
                                 " (L_TT is singular)"),
        mu_r_(mu_r) {}
  double mu_r() const { return mu_r_; }

 private:
  double mu_r_;
};

// Requested an operation a model family cannot support (e.g. input
// gradients of a step function).
class UnsupportedOperation : public std::logic_error {
 public:
  explicit UnsupportedOperation(const std::string& what)
      : std::logic_error(what) {}
};

}  // namespace fairshift

#endif  // FAIRSHIFT_ERRORS_HPP_
