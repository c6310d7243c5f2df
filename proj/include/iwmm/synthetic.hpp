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

#ifndef IWMM_SYNTHETIC_HPP
#define IWMM_SYNTHETIC_HPP

#include <iwmm/bayes_models.hpp>
#include <iwmm/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

/**
 * \file
 * \brief Seeded synthetic datasets for the bundled experiments.
 */

namespace iwmm {

/// `n_base` standard normal observations followed by one manually placed observation.
inline Dataset gaussian_outlier_data(std::uint64_t seed, double last_value, Eigen::Index n_base = 29) {
  Rng rng(seed);
  Dataset d;
  d.y.resize(n_base + 1);
  d.y.head(n_base) = standard_normal_vector(n_base, rng);
  d.y[n_base] = last_value;
  return d;
}

/// Recipe for overdispersed counts with a pest-control flavour.
/**
 * Columns: intercept, a skewed pre-treatment count score with many zeros, a treatment
 * indicator and a senior-building indicator; log exposure enters as offset. Counts are
 * negative binomial with gamma-mixed Poisson rates, and a few observations get their count
 * replaced by a large value.
 */
struct CountDataConfig {
  Eigen::Index n = 100;
  Eigen::Vector4d beta{3.09, 0.698, -0.517, -0.38};
  /// Gamma shape of the rate multiplier; smaller is more overdispersed.
  double dispersion = 0.3;
  double zero_fraction = 0.35;
  double treatment_rate = 0.6;
  double senior_rate = 0.3;
  Eigen::Index n_outliers = 3;
  /// Outlier counts are this multiple of the fitted mean, plus one.
  double outlier_scale = 15.0;
};

inline Dataset simulate_count_data(std::uint64_t seed, const CountDataConfig& cfg = {}) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::lognormal_distribution<double> pre(0.0, 1.0);
  std::uniform_real_distribution<double> exposure(0.6, 1.4);
  std::gamma_distribution<double> mult(cfg.dispersion, 1.0 / cfg.dispersion);

  Dataset d;
  d.X.resize(cfg.n, 4);
  d.y.resize(cfg.n);
  d.offset.resize(cfg.n);
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = unif(rng) < cfg.zero_fraction ? 0.0 : std::sqrt(pre(rng));
    d.X(i, 2) = unif(rng) < cfg.treatment_rate ? 1.0 : 0.0;
    d.X(i, 3) = unif(rng) < cfg.senior_rate ? 1.0 : 0.0;
    d.offset[i] = std::log(exposure(rng));
  }
  for (Eigen::Index i = 0; i < cfg.n; ++i) {
    const double mu = std::exp(d.X.row(i).dot(cfg.beta) + d.offset[i]);
    std::poisson_distribution<long long> pois(std::max(mu * mult(rng), 1e-12));
    d.y[i] = static_cast<double>(pois(rng));
  }
  for (Eigen::Index k = 0; k < std::min(cfg.n_outliers, cfg.n); ++k) {
    std::uniform_int_distribution<Eigen::Index> pick(0, cfg.n - 1);
    const Eigen::Index i = pick(rng);
    const double mu = std::exp(d.X.row(i).dot(cfg.beta) + d.offset[i]);
    d.y[i] = std::floor(cfg.outlier_scale * mu) + 1.0;
  }
  return d;
}

}  // namespace iwmm

#endif  // IWMM_SYNTHETIC_HPP
