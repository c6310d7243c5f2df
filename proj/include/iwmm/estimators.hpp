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

#ifndef IWMM_ESTIMATORS_HPP
#define IWMM_ESTIMATORS_HPP

#include <iwmm/errors.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

/**
 * \file
 * \brief Monte Carlo estimators and importance weight constructions.
 *
 * All weights are held as a log magnitude plus a sign so that weight ranges far beyond the
 * double range stay representable. Exponentiation happens only after the maximum log
 * magnitude has been subtracted.
 */

namespace iwmm {

/// S x D matrix of parameter draws in unconstrained space, one draw per row.
using DrawMatrix = Eigen::MatrixXd;

/// Length-S function values h(theta) evaluated at each draw.
using FunctionValues = Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Throws unless `draws` has S >= 2 rows, D >= 1 columns and only finite entries.
inline void validate_draws(const DrawMatrix& draws) {
  if (draws.rows() < 2 || draws.cols() < 1) {
    throw std::invalid_argument("draw matrix needs at least 2 draws and 1 dimension");
  }
  if (!draws.allFinite()) {
    throw std::invalid_argument("draw matrix contains non-finite entries");
  }
}

/// Log-magnitude + sign representation of importance weights.
/**
 * Houses both the common weights w = p/g (sign +1 everywhere) and the expectation-specific
 * weights v = (p/g) h (sign of h, with sign 0 and log magnitude -inf wherever h = 0).
 * `normalized` records whether the weights are true density ratios with known normalization,
 * which standard importance sampling requires and self-normalized sampling ignores.
 */
struct LogWeightVector {
  Eigen::VectorXd log_mag;
  Eigen::VectorXi sign;
  bool normalized = false;

  LogWeightVector() = default;

  /// All-positive weights with the given log magnitudes.
  explicit LogWeightVector(Eigen::VectorXd log_magnitudes, bool is_normalized = false)
      : log_mag(std::move(log_magnitudes)),
        sign(Eigen::VectorXi::Ones(log_mag.size())),
        normalized(is_normalized) {
    for (Eigen::Index s = 0; s < log_mag.size(); ++s) {
      if (log_mag[s] == kNegInf) {
        sign[s] = 0;
      }
    }
  }

  LogWeightVector(Eigen::VectorXd log_magnitudes, Eigen::VectorXi signs, bool is_normalized)
      : log_mag(std::move(log_magnitudes)), sign(std::move(signs)), normalized(is_normalized) {
    if (log_mag.size() != sign.size()) {
      throw std::invalid_argument("log magnitude and sign vectors differ in length");
    }
  }

  [[nodiscard]] Eigen::Index size() const { return log_mag.size(); }

  /// Same magnitudes with every nonzero sign set to +1.
  [[nodiscard]] LogWeightVector abs() const {
    LogWeightVector out = *this;
    for (Eigen::Index s = 0; s < out.sign.size(); ++s) {
      out.sign[s] = out.sign[s] == 0 ? 0 : 1;
    }
    return out;
  }

  /// Largest log magnitude over entries with nonzero sign, -inf when there are none.
  [[nodiscard]] double max_log() const {
    double m = kNegInf;
    for (Eigen::Index s = 0; s < log_mag.size(); ++s) {
      if (sign[s] != 0) {
        m = std::max(m, log_mag[s]);
      }
    }
    return m;
  }

  /// Absolute weights divided by their sum. Throws when every weight is zero.
  [[nodiscard]] Eigen::VectorXd self_normalized_abs() const {
    const double m = max_log();
    if (m == kNegInf) {
      throw DegenerateSampleError("all importance weights are zero");
    }
    Eigen::VectorXd out(size());
    for (Eigen::Index s = 0; s < size(); ++s) {
      out[s] = sign[s] == 0 ? 0.0 : std::exp(log_mag[s] - m);
    }
    return out / out.sum();
  }
};

/// log(sum(exp(x))) with max subtraction; -inf for empty or all -inf input.
template <class Range>
double log_sum_exp(const Range& x) {
  double m = kNegInf;
  for (const double v : x) {
    m = std::max(m, v);
  }
  if (m == kNegInf || m == kPosInf) {
    return m;
  }
  double acc = 0.0;
  for (const double v : x) {
    acc += std::exp(v - m);
  }
  return m + std::log(acc);
}

/// log(exp(a) + exp(b)).
inline double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == kNegInf) {
    return kNegInf;
  }
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Sample mean of h.
inline double simple_mc_estimate(const FunctionValues& h) {
  if (h.size() == 0) {
    throw std::invalid_argument("simple_mc_estimate: empty input");
  }
  return h.mean();
}

namespace detail {

inline void check_log_densities(const Eigen::VectorXd& log_p, const Eigen::VectorXd& log_g) {
  if (log_p.size() != log_g.size()) {
    throw std::invalid_argument("target and proposal log densities differ in length");
  }
  for (Eigen::Index s = 0; s < log_g.size(); ++s) {
    if (std::isnan(log_p[s]) || log_p[s] == kPosInf) {
      throw std::domain_error("target log density is not finite");
    }
    if (!std::isfinite(log_g[s])) {
      throw std::domain_error("proposal log density is not finite; the proposal must dominate");
    }
  }
}

}  // namespace detail

/// Common importance weights w = p / g in log space.
inline LogWeightVector common_log_weights(const Eigen::VectorXd& log_p,
                                          const Eigen::VectorXd& log_g,
                                          bool normalized = false) {
  detail::check_log_densities(log_p, log_g);
  return LogWeightVector(log_p - log_g, normalized);
}

/// Expectation-specific weights v = (p / g) h with the sign of h carried separately.
inline LogWeightVector expectation_log_weights(const Eigen::VectorXd& log_p,
                                               const Eigen::VectorXd& log_g,
                                               const FunctionValues& h,
                                               bool normalized = false) {
  detail::check_log_densities(log_p, log_g);
  if (h.size() != log_p.size()) {
    throw std::invalid_argument("function values and log densities differ in length");
  }
  Eigen::VectorXd log_mag(h.size());
  Eigen::VectorXi sign(h.size());
  for (Eigen::Index s = 0; s < h.size(); ++s) {
    if (!std::isfinite(h[s])) {
      throw std::domain_error("function value is not finite");
    }
    if (h[s] == 0.0 || log_p[s] == kNegInf) {
      log_mag[s] = kNegInf;
      sign[s] = 0;
    } else {
      log_mag[s] = log_p[s] - log_g[s] + std::log(std::abs(h[s]));
      sign[s] = h[s] > 0.0 ? 1 : -1;
    }
  }
  return {std::move(log_mag), std::move(sign), normalized};
}

/// Standard importance sampling estimate (1/S) sum w h. Requires normalized weights.
inline double is_estimate(const LogWeightVector& w, const FunctionValues& h) {
  if (!w.normalized) {
    throw ContractError("standard importance sampling needs normalized weights; use snis_estimate");
  }
  if (w.size() != h.size() || w.size() == 0) {
    throw std::invalid_argument("is_estimate: weights and function values differ in length");
  }
  const double m = w.max_log();
  if (m == kNegInf) {
    return 0.0;
  }
  double acc = 0.0;
  for (Eigen::Index s = 0; s < w.size(); ++s) {
    if (w.sign[s] != 0) {
      acc += w.sign[s] * std::exp(w.log_mag[s] - m) * h[s];
    }
  }
  return std::exp(m) * (acc / static_cast<double>(w.size()));
}

/// Self-normalized importance sampling estimate sum w h / sum w.
/**
 * Only differences `log_mag - max(log_mag)` enter the arithmetic, so a shift of every log
 * magnitude by a constant that is exact in floating point leaves the result bit-identical.
 */
inline double snis_estimate(const LogWeightVector& w, const FunctionValues& h) {
  if (w.size() != h.size() || w.size() == 0) {
    throw std::invalid_argument("snis_estimate: weights and function values differ in length");
  }
  const double m = w.max_log();
  if (m == kNegInf) {
    throw DegenerateSampleError("snis_estimate: all weights are zero");
  }
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index s = 0; s < w.size(); ++s) {
    if (w.sign[s] != 0) {
      const double ws = w.sign[s] * std::exp(w.log_mag[s] - m);
      num += ws * h[s];
      den += ws;
    }
  }
  if (den == 0.0) {
    throw DegenerateSampleError("snis_estimate: weights sum to zero");
  }
  return num / den;
}

/// log of the self-normalized estimate for h = exp(log_h) > 0, computed in log space.
/**
 * Entries with zero weight are skipped. Suited to integrands such as likelihoods whose
 * values underflow in linear scale.
 */
inline double log_snis_estimate(const LogWeightVector& w, const Eigen::VectorXd& log_h) {
  if (w.size() != log_h.size() || w.size() == 0) {
    throw std::invalid_argument("log_snis_estimate: weights and function values differ in length");
  }
  std::vector<double> num;
  std::vector<double> den;
  for (Eigen::Index s = 0; s < w.size(); ++s) {
    if (w.sign[s] < 0) {
      throw std::invalid_argument("log_snis_estimate: weights must be nonnegative");
    }
    if (w.sign[s] != 0) {
      num.push_back(w.log_mag[s] + log_h[s]);
      den.push_back(w.log_mag[s]);
    }
  }
  if (den.empty()) {
    throw DegenerateSampleError("log_snis_estimate: all weights are zero");
  }
  return log_sum_exp(num) - log_sum_exp(den);
}

/// Deterministic-mixture (balance heuristic) weights p / sum_j alpha_j g_j.
/**
 * `component_log_gs[j]` holds log g_j evaluated at every draw of the pooled sample, and
 * `alphas` the allocation fractions S_j / S.
 */
inline LogWeightVector balance_heuristic_log_weights(
    const Eigen::VectorXd& log_p, std::span<const Eigen::VectorXd> component_log_gs,
    std::span<const double> alphas, bool normalized = false) {
  if (component_log_gs.empty() || component_log_gs.size() != alphas.size()) {
    throw std::invalid_argument("need one allocation fraction per mixture component");
  }
  double total = 0.0;
  for (double a : alphas) {
    if (!(a >= 0.0)) {
      throw std::invalid_argument("allocation fractions must be nonnegative");
    }
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("allocation fractions must sum to one");
  }
  const Eigen::Index S = log_p.size();
  for (const auto& lg : component_log_gs) {
    if (lg.size() != S) {
      throw std::invalid_argument("component log density has the wrong length");
    }
  }
  Eigen::VectorXd log_mix(S);
  std::vector<double> terms(component_log_gs.size());
  for (Eigen::Index s = 0; s < S; ++s) {
    for (std::size_t j = 0; j < component_log_gs.size(); ++j) {
      const double lg = component_log_gs[j][s];
      if (std::isnan(lg) || lg == kPosInf) {
        throw std::domain_error("component log density is not finite");
      }
      terms[j] = alphas[j] > 0.0 ? std::log(alphas[j]) + lg : kNegInf;
    }
    log_mix[s] = log_sum_exp(terms);
    if (log_mix[s] == kNegInf) {
      throw std::domain_error("every mixture component has zero density at a draw");
    }
  }
  return common_log_weights(log_p, log_mix, normalized);
}

}  // namespace iwmm

#endif  // IWMM_ESTIMATORS_HPP
