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

#ifndef IWMM_ERRORS_HPP
#define IWMM_ERRORS_HPP

#include <stdexcept>
#include <string>

/**
 * \file
 * \brief Exception types shared by the library.
 *
 * Argument and length errors use `std::invalid_argument`, density support violations use
 * `std::domain_error`. The types below cover the numerical failure modes callers are expected
 * to catch and recover from.
 */

namespace iwmm {

/// Every weight is zero, or too few draws carry weight for the requested quantity.
class DegenerateSampleError : public std::runtime_error {
 public:
  explicit DegenerateSampleError(const std::string& what) : std::runtime_error(what) {}
};

/// A moment-matching transform could not be built (e.g. Cholesky failed after jitter).
class TransformUnavailable : public std::runtime_error {
 public:
  explicit TransformUnavailable(const std::string& what) : std::runtime_error(what) {}
};

/// The caller violated an estimator contract (e.g. standard IS on unnormalized weights).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// A posterior sampler could not produce a usable chain.
class SamplerFailure : public std::runtime_error {
 public:
  explicit SamplerFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iwmm

#endif  // IWMM_ERRORS_HPP
