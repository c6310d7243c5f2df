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

#ifndef IWMM_BASELINES_HPP
#define IWMM_BASELINES_HPP

#include <iwmm/affine_adapt.hpp>
#include <iwmm/errors.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/moment_matching.hpp>
#include <iwmm/pareto_tail.hpp>
#include <iwmm/random.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

/**
 * \file
 * \brief Parametric adaptive importance sampling with a single Gaussian or Student-t3
 * proposal, adapted by weighted moments, and its double-adaptation variant.
 */

namespace iwmm {

enum class ProposalFamily { gaussian, student_t3 };

inline constexpr double kStudentTDof = 3.0;

/// Multivariate normal or Student-t3 proposal with location and lower-triangular scale factor.
/**
 * For the t3 family `scale_factor` factors the scale matrix, so the covariance is three times
 * scale_factor * scale_factor^T.
 */
struct ParametricProposal {
  ProposalFamily family = ProposalFamily::gaussian;
  Eigen::VectorXd location;
  Eigen::MatrixXd scale_factor;
  bool adapt_scale = true;

  [[nodiscard]] Eigen::Index dim() const { return location.size(); }

  /// Proposal whose mean and covariance match `draws`.
  static ParametricProposal from_sample(ProposalFamily family, const DrawMatrix& draws,
                                        bool adapt_scale = true) {
    validate_draws(draws);
    ParametricProposal q;
    q.family = family;
    q.location = sample_mean(draws);
    q.scale_factor = covariance_factor(family, sample_covariance(draws));
    q.adapt_scale = adapt_scale;
    return q;
  }

  /// Scale factor whose family covariance equals `cov`.
  static Eigen::MatrixXd covariance_factor(ProposalFamily family, const Eigen::MatrixXd& cov) {
    const double ratio =
        family == ProposalFamily::student_t3 ? (kStudentTDof - 2.0) / kStudentTDof : 1.0;
    return jittered_cholesky(ratio * cov);
  }
};

namespace detail {

inline void check_proposal(const ParametricProposal& q) {
  const Eigen::Index D = q.location.size();
  if (D == 0 || q.scale_factor.rows() != D || q.scale_factor.cols() != D) {
    throw std::invalid_argument("proposal location and scale dimensions differ");
  }
  if (!q.location.allFinite() || !q.scale_factor.allFinite()) {
    throw std::invalid_argument("proposal parameters must be finite");
  }
  if ((q.scale_factor.diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument("proposal scale factor is not invertible");
  }
}

}  // namespace detail

/// Normalized log density of the proposal at each row of `draws`.
inline Eigen::VectorXd proposal_log_density(const ParametricProposal& q, const DrawMatrix& draws) {
  detail::check_proposal(q);
  const Eigen::Index D = q.dim();
  if (draws.cols() != D) {
    throw std::invalid_argument("draws do not match the proposal dimension");
  }
  const Eigen::MatrixXd centered = (draws.rowwise() - q.location.transpose()).transpose();
  const Eigen::MatrixXd z = q.scale_factor.triangularView<Eigen::Lower>().solve(centered);
  const Eigen::VectorXd sq = z.colwise().squaredNorm().transpose();
  const double log_det = q.scale_factor.diagonal().array().log().sum();
  const double d = static_cast<double>(D);
  if (q.family == ProposalFamily::gaussian) {
    return (-0.5 * d * std::log(2.0 * std::numbers::pi) - log_det) - 0.5 * sq.array();
  }
  const double nu = kStudentTDof;
  const double c = std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) -
                   0.5 * d * std::log(nu * std::numbers::pi) - log_det;
  return c - 0.5 * (nu + d) * (sq.array() / nu).log1p();
}

/// S independent draws from the proposal.
inline DrawMatrix sample_proposal(const ParametricProposal& q, Eigen::Index S, Rng& rng) {
  detail::check_proposal(q);
  DrawMatrix z = standard_normal_matrix(S, q.dim(), rng);
  if (q.family == ProposalFamily::student_t3) {
    std::chi_squared_distribution<double> chi2(kStudentTDof);
    for (Eigen::Index s = 0; s < S; ++s) {
      z.row(s) /= std::sqrt(chi2(rng) / kStudentTDof);
    }
  }
  DrawMatrix x = z * q.scale_factor.transpose();
  x.rowwise() += q.location.transpose();
  return x;
}

struct AisOptions {
  /// Draws per iteration, shared between the two proposals in the double variant.
  Eigen::Index draws_per_iter = 4000;
  int max_iter = 10;
  double k_threshold = kDefaultKThreshold;
  bool double_adapt = false;
  /// Pareto smoothing of the weights used for moments and for the estimate.
  bool smoothing = true;
  std::uint64_t seed = 0;
};

/// Target of an AIS run. `log_h` is the log of a positive integrand; empty means h = 1.
struct AisTarget {
  std::function<Eigen::VectorXd(const DrawMatrix&)> log_p;
  std::function<Eigen::VectorXd(const DrawMatrix&)> log_h;
};

struct AisIteration {
  int iteration = 0;
  /// khat of the weights driving the (first) proposal's adaptation.
  double khat_first = kPosInf;
  /// khat of the common weights of the second proposal; NaN without double adaptation.
  double khat_second = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd location_first;
  Eigen::VectorXd location_second;
};

struct AisResult {
  /// Self-normalized estimate of E_p[h] and its logarithm.
  double log_estimate = 0.0;
  double estimate = 0.0;
  /// Larger of the common and expectation-specific khat of the final estimate's weights.
  double khat = kPosInf;
  double khat_common = kPosInf;
  double khat_expectation = kPosInf;
  bool converged = false;
  int iterations = 0;
  std::vector<AisIteration> history;
  ParametricProposal first;
  ParametricProposal second;
  EvalCounters counters;
};

namespace detail {

inline Eigen::VectorXd eval_log_h(const AisTarget& t, const DrawMatrix& x, EvalCounters& c) {
  c.function_evals += x.rows();
  if (!t.log_h) {
    return Eigen::VectorXd::Zero(x.rows());
  }
  Eigen::VectorXd out = t.log_h(x);
  if (out.size() != x.rows()) {
    throw std::invalid_argument("log h callback returned the wrong number of values");
  }
  return out;
}

/// Moves `q` to the weighted moments of `x`; the scale stays fixed when it cannot be updated.
inline void update_proposal(ParametricProposal& q, const DrawMatrix& x, const LogWeightVector& w) {
  try {
    q.location = weighted_mean(x, w);
  } catch (const DegenerateSampleError&) {
    return;
  }
  const bool high_dim = q.dim() > x.rows() / 10;
  if (!q.adapt_scale || high_dim) {
    return;
  }
  try {
    q.scale_factor = ParametricProposal::covariance_factor(q.family, weighted_covariance(x, w));
  } catch (const std::runtime_error&) {
    q.adapt_scale = false;
  }
}

inline std::pair<LogWeightVector, ParetoDiagnostic> weights_for_moments(const LogWeightVector& w,
                                                                        const AisOptions& opts) {
  if (opts.smoothing) {
    return pareto_smooth(w, opts.k_threshold);
  }
  return {w, fit_gpd_tail(w, opts.k_threshold)};
}

/// SNIS estimate with diagnostics from log p - log g and log h on one sample.
inline void finish_estimate(AisResult& res, const Eigen::VectorXd& log_p,
                            const Eigen::VectorXd& log_g, const Eigen::VectorXd& log_h,
                            const AisOptions& opts) {
  const LogWeightVector w = common_log_weights(log_p, log_g);
  auto [ws, diag] = weights_for_moments(w, opts);
  res.khat_common = diag.khat;
  res.khat_expectation = fit_gpd_tail(LogWeightVector(w.log_mag + log_h), opts.k_threshold).khat;
  res.khat = std::max(res.khat_common, res.khat_expectation);
  res.log_estimate = log_snis_estimate(ws, log_h);
  res.estimate = std::exp(res.log_estimate);
}

}  // namespace detail

/// Adaptive importance sampling with a parametric proposal.
/**
 * Every iteration draws a fresh sample, fits the tail of its weights and, unless the khat is
 * already below the threshold, moves the proposal to the sample's weighted mean (and
 * covariance). Only the current iteration's draws enter an update.
 *
 * Single adaptation adapts on the common weights p / q. Double adaptation runs one proposal on
 * the expectation-specific weights p h / q_1 and one on p / q_2 with half the draws each, and
 * estimates from the pooled final sample with balance-heuristic weights.
 */
inline AisResult ais_run(const AisTarget& target, const ParametricProposal& init,
                         const AisOptions& opts = {}) {
  detail::check_proposal(init);
  if (!target.log_p) {
    throw std::invalid_argument("target log density callback is required");
  }
  if (opts.draws_per_iter < 2 || opts.max_iter < 1 || !(opts.k_threshold > 0.0)) {
    throw std::invalid_argument("invalid AIS options");
  }
  AisResult res;
  res.first = init;
  res.second = init;
  Rng rng(opts.seed);

  if (!opts.double_adapt) {
    for (int it = 1; it <= opts.max_iter; ++it) {
      const DrawMatrix x = sample_proposal(res.first, opts.draws_per_iter, rng);
      const Eigen::VectorXd log_p =
          detail::eval_density(target.log_p, x, res.counters.target_evals);
      res.counters.proposal_evals += x.rows();
      const Eigen::VectorXd log_q = proposal_log_density(res.first, x);
      const Eigen::VectorXd log_h = detail::eval_log_h(target, x, res.counters);
      const LogWeightVector w = common_log_weights(log_p, log_q);
      auto [ws, diag] = detail::weights_for_moments(w, opts);
      res.history.push_back({it, diag.khat, std::numeric_limits<double>::quiet_NaN(),
                             res.first.location, Eigen::VectorXd{}});
      res.iterations = it;
      const bool done = diag.khat <= opts.k_threshold;
      if (done || it == opts.max_iter) {
        res.converged = done;
        detail::finish_estimate(res, log_p, log_q, log_h, opts);
        break;
      }
      detail::update_proposal(res.first, x, ws);
    }
    res.second = res.first;
    return res;
  }

  const Eigen::Index n_first = (opts.draws_per_iter + 1) / 2;
  const Eigen::Index n_second = opts.draws_per_iter - n_first;
  if (n_second < 1) {
    throw std::invalid_argument("double adaptation needs at least two draws per iteration");
  }
  bool first_done = false;
  bool second_done = false;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const DrawMatrix x1 = sample_proposal(res.first, n_first, rng);
    const DrawMatrix x2 = sample_proposal(res.second, n_second, rng);
    const Eigen::VectorXd lp1 = detail::eval_density(target.log_p, x1, res.counters.target_evals);
    const Eigen::VectorXd lp2 = detail::eval_density(target.log_p, x2, res.counters.target_evals);
    res.counters.proposal_evals += x1.rows() + x2.rows();
    const Eigen::VectorXd lq1 = proposal_log_density(res.first, x1);
    const Eigen::VectorXd lq2 = proposal_log_density(res.second, x2);
    const Eigen::VectorXd lh1 = detail::eval_log_h(target, x1, res.counters);
    const Eigen::VectorXd lh2 = detail::eval_log_h(target, x2, res.counters);

    const LogWeightVector v1_log(lp1 - lq1 + lh1);
    const LogWeightVector w2 = common_log_weights(lp2, lq2);
    auto [vs, vdiag] = detail::weights_for_moments(v1_log, opts);
    auto [ws, wdiag] = detail::weights_for_moments(w2, opts);
    res.history.push_back({it, vdiag.khat, wdiag.khat, res.first.location, res.second.location});
    res.iterations = it;
    first_done = vdiag.khat <= opts.k_threshold;
    second_done = wdiag.khat <= opts.k_threshold;
    if ((first_done && second_done) || it == opts.max_iter) {
      res.converged = first_done && second_done;
      DrawMatrix x(opts.draws_per_iter, init.dim());
      x << x1, x2;
      Eigen::VectorXd log_p(opts.draws_per_iter);
      log_p << lp1, lp2;
      Eigen::VectorXd log_h(opts.draws_per_iter);
      log_h << lh1, lh2;
      // each proposal at the other proposal's draws
      res.counters.proposal_evals += x.rows();
      const Eigen::VectorXd g1 = proposal_log_density(res.first, x);
      const Eigen::VectorXd g2 = proposal_log_density(res.second, x);
      const double a1 = static_cast<double>(n_first) / static_cast<double>(x.rows());
      Eigen::VectorXd log_mix(x.rows());
      for (Eigen::Index s = 0; s < x.rows(); ++s) {
        log_mix[s] = log_add_exp(std::log(a1) + g1[s], std::log1p(-a1) + g2[s]);
      }
      detail::finish_estimate(res, log_p, log_mix, log_h, opts);
      break;
    }
    if (!first_done) {
      detail::update_proposal(res.first, x1, vs);
    }
    if (!second_done) {
      detail::update_proposal(res.second, x2, ws);
    }
  }
  return res;
}

}  // namespace iwmm

#endif  // IWMM_BASELINES_HPP
