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

#ifndef IWMM_PARETO_TAIL_HPP
#define IWMM_PARETO_TAIL_HPP

#include <iwmm/estimators.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Generalized Pareto tail fits of importance weights, the khat diagnostic and Pareto
 * smoothing of the largest weights.
 */

namespace iwmm {

/// Default reliability threshold on the fitted tail shape.
inline constexpr double kDefaultKThreshold = 0.7;

/// Fewer draws than this yield an unreliable sentinel diagnostic.
inline constexpr Eigen::Index kMinDrawsForFit = 25;

/// Result of a generalized Pareto fit to the upper tail of a weight vector.
/**
 * Sentinels: `khat = +inf` with `tail_len = 0` when the sample is too small to fit, and
 * `khat = -inf` when the tail has zero variance (no tail risk).
 */
struct ParetoDiagnostic {
  double khat = kPosInf;
  double sigma = 0.0;
  Eigen::Index tail_len = 0;
  bool threshold_exceeded = true;

  /// True when an actual GPD fit (finite khat, positive scale) backs this diagnostic.
  [[nodiscard]] bool fitted() const {
    return std::isfinite(khat) && sigma > 0.0 && tail_len >= 5;
  }
};

/// Shape and scale of a two-parameter generalized Pareto distribution.
struct GpdFit {
  double k = kPosInf;
  double sigma = 0.0;
};

/// Tail length M = ceil(min(0.2 S, 3 sqrt(S))).
inline Eigen::Index pareto_tail_length(Eigen::Index S) {
  const double s = static_cast<double>(S);
  return static_cast<Eigen::Index>(std::ceil(std::min(0.2 * s, 3.0 * std::sqrt(s))));
}

/// Inverse CDF of GPD(k, sigma) with location 0.
inline double gpd_quantile(double p, double k, double sigma) {
  if (k == 0.0) {
    return -sigma * std::log1p(-p);
  }
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

/// Zhang-Stephens profile-posterior estimate of GPD(k, sigma) from positive exceedances.
/**
 * The estimate of theta = -k / sigma is a posterior mean over a grid of
 * `min_grid_points + floor(sqrt(N))` quadrature nodes, and the resulting shape is shrunk
 * towards 0.5 with a weakly informative prior worth ten pseudo-observations.
 * Returns k = +inf when the fit is not defined (e.g. the lower quartile is zero).
 */
inline GpdFit fit_gpd(std::vector<double> x, int min_grid_points = 30, bool regularize = true) {
  const auto N = static_cast<Eigen::Index>(x.size());
  if (N < 2) {
    return {};
  }
  std::sort(x.begin(), x.end());
  constexpr double prior = 3.0;
  const Eigen::Index M = min_grid_points + static_cast<Eigen::Index>(std::floor(std::sqrt(N)));
  const auto q_idx = static_cast<Eigen::Index>(std::floor(static_cast<double>(N) / 4.0 + 0.5)) - 1;
  const double xstar = x[static_cast<std::size_t>(std::max<Eigen::Index>(q_idx, 0))];
  const double xmax = x.back();
  if (!(xstar > 0.0) || !std::isfinite(xmax)) {
    return {};
  }

  Eigen::VectorXd theta(M);
  Eigen::VectorXd log_lik(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    theta[j] = 1.0 / xmax +
               (1.0 - std::sqrt(static_cast<double>(M) / (static_cast<double>(j + 1) - 0.5))) /
                   prior / xstar;
    // profile log likelihood of theta
    double kj = 0.0;
    for (double xi : x) {
      kj += std::log1p(-theta[j] * xi);
    }
    kj /= static_cast<double>(N);
    log_lik[j] = static_cast<double>(N) * (std::log(-theta[j] / kj) - kj - 1.0);
  }
  const double lse = log_sum_exp(log_lik);
  double theta_hat = 0.0;
  for (Eigen::Index j = 0; j < M; ++j) {
    theta_hat += theta[j] * std::exp(log_lik[j] - lse);
  }
  double k = 0.0;
  for (double xi : x) {
    k += std::log1p(-theta_hat * xi);
  }
  k /= static_cast<double>(N);
  const double sigma = -k / theta_hat;
  if (regularize) {
    constexpr double a = 10.0;
    const double n = static_cast<double>(N);
    k = k * n / (n + a) + a * 0.5 / (n + a);
  }
  if (std::isnan(k) || !(sigma > 0.0) || !std::isfinite(sigma)) {
    return {};
  }
  return {k, sigma};
}

namespace detail {

struct TailSplit {
  std::vector<Eigen::Index> order;  // ascending by log magnitude
  Eigen::Index tail_len = 0;
  double max_log = kNegInf;
  double cutoff = kNegInf;  // largest non-tail value, shifted by max_log
  bool zero_variance = false;
};

inline TailSplit split_tail(const LogWeightVector& w) {
  TailSplit t;
  const Eigen::Index S = w.size();
  t.max_log = w.max_log();
  t.tail_len = pareto_tail_length(S);
  t.order.resize(static_cast<std::size_t>(S));
  std::iota(t.order.begin(), t.order.end(), Eigen::Index{0});
  auto value = [&](Eigen::Index s) { return w.sign[s] == 0 ? kNegInf : w.log_mag[s]; };
  std::stable_sort(t.order.begin(), t.order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return value(a) < value(b); });
  if (t.max_log == kNegInf) {
    t.zero_variance = true;
    return t;
  }
  const auto first_tail = static_cast<std::size_t>(S - t.tail_len);
  t.cutoff = value(t.order[first_tail - 1]) - t.max_log;
  const double tail_min = value(t.order[first_tail]) - t.max_log;
  t.zero_variance = tail_min == 0.0;
  return t;
}

}  // namespace detail

/// Fits a GPD to the largest weights and reports the khat diagnostic.
/**
 * Uses the magnitudes of `w` (signs are ignored). The tail is the M largest weights and the
 * exceedances are measured above the largest weight outside the tail. The fit is a pure
 * function of the multiset of weights, so it is invariant to permutations of the input.
 */
inline ParetoDiagnostic fit_gpd_tail(const LogWeightVector& w,
                                     double threshold = kDefaultKThreshold) {
  ParetoDiagnostic diag;
  const Eigen::Index S = w.size();
  if (S < kMinDrawsForFit) {
    diag.threshold_exceeded = true;
    return diag;
  }
  const auto tail = detail::split_tail(w);
  if (tail.zero_variance) {
    diag.khat = kNegInf;
    diag.tail_len = tail.tail_len;
    diag.threshold_exceeded = false;
    return diag;
  }
  const double exp_cutoff = std::exp(tail.cutoff);
  std::vector<double> exceedances;
  exceedances.reserve(static_cast<std::size_t>(tail.tail_len));
  for (auto it = tail.order.end() - tail.tail_len; it != tail.order.end(); ++it) {
    const double lm = w.sign[*it] == 0 ? kNegInf : w.log_mag[*it];
    exceedances.push_back(std::exp(lm - tail.max_log) - exp_cutoff);
  }
  const auto fit = fit_gpd(std::move(exceedances));
  diag.khat = fit.k;
  diag.sigma = fit.sigma;
  diag.tail_len = tail.tail_len;
  diag.threshold_exceeded = diag.khat > threshold;
  return diag;
}

/// True iff khat <= threshold.
inline bool is_reliable(const ParetoDiagnostic& diag, double threshold = kDefaultKThreshold) {
  return diag.khat <= threshold;
}

/// The larger of two diagnostics (the reported value when both common and
/// expectation-specific weights are checked).
inline const ParetoDiagnostic& worse_of(const ParetoDiagnostic& a, const ParetoDiagnostic& b) {
  return b.khat > a.khat ? b : a;
}

/// Replaces the M largest weights with expected GPD order statistics.
/**
 * The tail weights become `cutoff + F^{-1}((z - 1/2) / M)` for z = 1..M in rank order,
 * capped at the largest raw weight. Non-tail entries, signs and zero weights are left
 * bit-identical.
 * When no GPD could be fitted (either sentinel) the weights are returned unchanged.
 * The diagnostic is always computed on the raw weights.
 */
inline std::pair<LogWeightVector, ParetoDiagnostic> pareto_smooth(
    const LogWeightVector& w, double threshold = kDefaultKThreshold) {
  auto diag = fit_gpd_tail(w, threshold);
  LogWeightVector out = w;
  if (!diag.fitted()) {
    return {std::move(out), diag};
  }
  const auto tail = detail::split_tail(w);
  const double exp_cutoff = std::exp(tail.cutoff);
  const auto M = static_cast<double>(tail.tail_len);
  Eigen::Index z = 0;
  for (auto it = tail.order.end() - tail.tail_len; it != tail.order.end(); ++it, ++z) {
    if (out.sign[*it] == 0) {
      continue;  // zero weights stay zero
    }
    const double p = (static_cast<double>(z) + 0.5) / M;
    const double q = gpd_quantile(p, diag.khat, diag.sigma) + exp_cutoff;
    out.log_mag[*it] = std::min(std::log(q), 0.0) + tail.max_log;
  }
  return {std::move(out), diag};
}

}  // namespace iwmm

#endif  // IWMM_PARETO_TAIL_HPP
