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


#ifndef FAIRSHIFT_FAIRSHIFT_HPP_
#define FAIRSHIFT_FAIRSHIFT_HPP_

#include "fairshift/alignment.hpp"
#include "fairshift/battery.hpp"
#include "fairshift/bounds.hpp"
#include "fairshift/csv.hpp"
#include "fairshift/data.hpp"
#include "fairshift/errors.hpp"
#include "fairshift/experiment.hpp"
#include "fairshift/extrapolation.hpp"
#include "fairshift/json_util.hpp"
#include "fairshift/kernel_graph.hpp"
#include "fairshift/linalg.hpp"
#include "fairshift/metrics.hpp"
#include "fairshift/model.hpp"
#include "fairshift/predictor.hpp"
#include "fairshift/regularizers.hpp"
#include "fairshift/rng.hpp"
#include "fairshift/solver.hpp"

#endif  // FAIRSHIFT_FAIRSHIFT_HPP_
