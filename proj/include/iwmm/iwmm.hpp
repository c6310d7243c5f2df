// Copyright 2026 The iwmm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IWMM_IWMM_HPP
#define IWMM_IWMM_HPP

/**
 * \file
 * \brief Includes every public header of the library.
 */

#include <iwmm/affine_adapt.hpp>
#include <iwmm/baselines.hpp>
#include <iwmm/bayes_models.hpp>
#include <iwmm/errors.hpp>
#include <iwmm/experiments.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/io.hpp>
#include <iwmm/loo_cv.hpp>
#include <iwmm/moment_matching.hpp>
#include <iwmm/parallel.hpp>
#include <iwmm/pareto_tail.hpp>
#include <iwmm/random.hpp>
#include <iwmm/synthetic.hpp>

#endif  // IWMM_IWMM_HPP
