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

#ifndef IWMM_MOMENT_MATCHING_HPP
#define IWMM_MOMENT_MATCHING_HPP

#include <iwmm/affine_adapt.hpp>
#include <iwmm/errors.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/pareto_tail.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

/**
 * \file
 * \brief Importance weighted moment matching: the adaptation loops for standard importance
 * sampling, simple Monte Carlo and self-normalized importance sampling, and the split
 * proposal that combines two implicitly adapted proposals.
 *
 * Adaptation never resamples. Draws are moved by affine maps and the proposal density at a
 * moved draw is the proposal density at its preimage divided by |det J|, so the proposal is
 * evaluated once, on the original draws.
 */

namespace iwmm {

/// Target, proposal and integrand evaluated row-wise on a draw matrix.
/**
 * `log_p` and `log_g` may be unnormalized. `h` may be left empty, which means h = 1.
 * Callbacks must be deterministic for a fixed input.
 */
struct TargetCallbacks {
  std::function<Eigen::VectorXd(const DrawMatrix&)> log_p;
  std::function<Eigen::VectorXd(const DrawMatrix&)> log_g;
  std::function<FunctionValues(const DrawMatrix&)> h;
};

enum class WeightKind { common, expectation };

/// Evaluation counts in units of single-draw density evaluations.
struct EvalCounters {
  std::int64_t target_evals = 0;
  std::int64_t proposal_evals = 0;
  std::int64_t function_evals = 0;
  /// Proposal evaluations at split-proposal pseudo-draws (not part of the adaptation).
  std::int64_t split_evals = 0;

  EvalCounters& operator+=(const EvalCounters& o) {
    target_evals += o.target_evals;
    proposal_evals += o.proposal_evals;
    function_evals += o.function_evals;
    split_evals += o.split_evals;
    return *this;
  }
};

/// One attempted transform. `khat_after` is NaN when the transform could not be built.
struct KhatStep {
  int level = 0;
  double khat_before = 0.0;
  double khat_after = 0.0;
  bool accepted = false;
};

struct AdaptOptions {
  double k_threshold = kDefaultKThreshold;
  /// Use Pareto-smoothed absolute weights for the weighted moments.
  bool smooth_moment_weights = true;
  /// Upper bound on accepted transforms in one loop.
  int max_accepted = 30;
  /// Whether log_p / log_g are normalized densities (enables standard IS estimates).
  bool normalized = false;
  TransformOptions transform{};
};

struct AdaptationResult {
  TransformChain chain;
  DrawMatrix final_draws;
  /// Raw weights (expectation-specific or common) driving the loop at the final draws.
  LogWeightVector final_weights;
  Eigen::VectorXd final_log_p;
  Eigen::VectorXd final_log_g;
  /// h at the final draws; empty if the loop never evaluated h.
  FunctionValues final_h;
  std::vector<KhatStep> khat_history;
  double khat_initial = kPosInf;
  double khat_final = kPosInf;
  bool converged = false;
  bool hit_cap = false;
  EvalCounters counters;

  [[nodiscard]] std::size_t accepted_count() const {
    return static_cast<std::size_t>(std::count_if(
        khat_history.begin(), khat_history.end(), [](const KhatStep& s) { return s.accepted; }));
  }
};

namespace detail {

/// Mutable state of an adaptation in progress.
struct AdaptState {
  DrawMatrix draws;
  /// Proposal log density at the original (untransformed) draws.
  Eigen::VectorXd base_log_g;
  TransformChain chain;
  Eigen::VectorXd log_p;
  FunctionValues h;
  LogWeightVector weights;
  ParetoDiagnostic diag;
};

inline bool all_finite_or_neg_inf(const Eigen::VectorXd& v) {
  for (const double x : v) {
    if (std::isnan(x) || x == kPosInf) {
      return false;
    }
  }
  return true;
}

inline LogWeightVector loop_weights(WeightKind kind, const Eigen::VectorXd& log_p,
                                    const Eigen::VectorXd& log_g, const FunctionValues& h,
                                    bool normalized) {
  if (kind == WeightKind::expectation) {
    return expectation_log_weights(log_p, log_g, h, normalized);
  }
  return common_log_weights(log_p, log_g, normalized);
}

inline FunctionValues eval_h(const TargetCallbacks& cb, const DrawMatrix& draws,
                             EvalCounters& counters) {
  counters.function_evals += draws.rows();
  if (!cb.h) {
    return FunctionValues::Ones(draws.rows());
  }
  FunctionValues h = cb.h(draws);
  if (h.size() != draws.rows()) {
    throw std::invalid_argument("h callback returned the wrong number of values");
  }
  return h;
}

inline Eigen::VectorXd eval_density(const std::function<Eigen::VectorXd(const DrawMatrix&)>& f,
                                    const DrawMatrix& draws, std::int64_t& counter) {
  counter += draws.rows();
  Eigen::VectorXd out = f(draws);
  if (out.size() != draws.rows()) {
    throw std::invalid_argument("density callback returned the wrong number of values");
  }
  return out;
}

/// Runs the T1 -> T2 -> T3 accept/reject loop on `st` until khat <= threshold, all three
/// levels are rejected in a row, or the cap on accepted transforms is reached.
inline void run_adaptation_loop(WeightKind kind, const TargetCallbacks& cb, AdaptState& st,
                                const AdaptOptions& opts, AdaptationResult& res) {
  const double thr = opts.k_threshold;
  const bool need_h = kind == WeightKind::expectation;
  {
    const Eigen::VectorXd log_g = implicit_log_density(st.base_log_g, st.chain);
    st.weights = loop_weights(kind, st.log_p, log_g, st.h, opts.normalized);
    st.diag = fit_gpd_tail(st.weights, thr);
  }
  res.khat_initial = st.diag.khat;

  int accepted = 0;
  while (st.diag.khat > thr) {
    if (accepted >= opts.max_accepted) {
      res.hit_cap = true;
      break;
    }
    bool took = false;
    for (int level = 1; level <= 3; ++level) {
      LogWeightVector moment_w = st.weights.abs();
      if (opts.smooth_moment_weights) {
        moment_w = pareto_smooth(moment_w, thr).first;
      }
      AffineMap map;
      try {
        map = build_transform(level, st.draws, moment_w, opts.transform);
      } catch (const TransformUnavailable&) {
        res.khat_history.push_back(
            {level, st.diag.khat, std::numeric_limits<double>::quiet_NaN(), false});
        continue;
      }
      DrawMatrix moved = map.apply(st.draws);
      Eigen::VectorXd log_p = eval_density(cb.log_p, moved, res.counters.target_evals);
      FunctionValues h = need_h ? eval_h(cb, moved, res.counters) : FunctionValues{};
      if (!all_finite_or_neg_inf(log_p) || (need_h && !h.allFinite())) {
        res.khat_history.push_back({level, st.diag.khat, kPosInf, false});
        continue;
      }
      const Eigen::VectorXd log_g =
          st.base_log_g.array() - (st.chain.total_log_det() + map.log_det_jacobian());
      LogWeightVector w = loop_weights(kind, log_p, log_g, h, opts.normalized);
      const ParetoDiagnostic diag = fit_gpd_tail(w, thr);
      const bool accept = diag.khat < st.diag.khat;
      res.khat_history.push_back({level, st.diag.khat, diag.khat, accept});
      if (accept) {
        st.draws = std::move(moved);
        st.log_p = std::move(log_p);
        st.h = std::move(h);
        st.weights = std::move(w);
        st.diag = diag;
        st.chain.push_back(std::move(map));
        ++accepted;
        took = true;
        break;
      }
    }
    if (!took) {
      break;
    }
  }

  res.khat_final = st.diag.khat;
  res.converged = st.diag.khat <= thr;
  res.chain = st.chain;
  res.final_draws = st.draws;
  res.final_weights = st.weights;
  res.final_log_p = st.log_p;
  res.final_log_g = implicit_log_density(st.base_log_g, st.chain);
  res.final_h = st.h;
}

inline AdaptState initial_state(const TargetCallbacks& cb, const DrawMatrix& draws,
                                bool proposal_is_target, bool need_h, EvalCounters& counters) {
  validate_draws(draws);
  if (!cb.log_p) {
    throw std::invalid_argument("target log density callback is required");
  }
  AdaptState st;
  st.draws = draws;
  st.log_p = eval_density(cb.log_p, draws, counters.target_evals);
  if (proposal_is_target) {
    st.base_log_g = st.log_p;
    counters.proposal_evals += draws.rows();
  } else {
    if (!cb.log_g) {
      throw std::invalid_argument("proposal log density callback is required");
    }
    st.base_log_g = eval_density(cb.log_g, draws, counters.proposal_evals);
  }
  if (need_h) {
    st.h = eval_h(cb, draws, counters);
  }
  return st;
}

}  // namespace detail

/// Moment matching for standard importance sampling (adapts on |v| = |p h / g|).
inline AdaptationResult adapt_standard_is(const TargetCallbacks& cb, const DrawMatrix& draws,
                                          const AdaptOptions& opts = {}) {
  if (!(opts.k_threshold > 0.0)) {
    throw std::invalid_argument("k threshold must be positive");
  }
  AdaptationResult res;
  auto st = detail::initial_state(cb, draws, false, true, res.counters);
  detail::run_adaptation_loop(WeightKind::expectation, cb, st, opts, res);
  return res;
}

/// Moment matching for simple Monte Carlo: the draws come from p itself and g = p.
/**
 * `cb.log_g` is ignored. The implicit proposal keeps the unknown normalizing constant of p,
 * so the resulting weights are properly normalized ratios.
 */
inline AdaptationResult adapt_simple_mc(const TargetCallbacks& cb, const DrawMatrix& draws,
                                        AdaptOptions opts = {}) {
  if (!(opts.k_threshold > 0.0)) {
    throw std::invalid_argument("k threshold must be positive");
  }
  opts.normalized = true;
  AdaptationResult res;
  auto st = detail::initial_state(cb, draws, true, true, res.counters);
  detail::run_adaptation_loop(WeightKind::expectation, cb, st, opts, res);
  return res;
}

/// Moment matching on the common weights p / g only, with log g at `draws` supplied.
/**
 * Used when the proposal is already optimal for the SNIS numerator (leave-one-out folds with
 * the full posterior as proposal). `base_log_g` counts as S proposal evaluations; `cb.log_g`
 * is not called.
 */
inline AdaptationResult adapt_common_weights(const TargetCallbacks& cb, const DrawMatrix& draws,
                                             const Eigen::VectorXd& base_log_g,
                                             const AdaptOptions& opts = {}) {
  if (!(opts.k_threshold > 0.0)) {
    throw std::invalid_argument("k threshold must be positive");
  }
  validate_draws(draws);
  if (base_log_g.size() != draws.rows()) {
    throw std::invalid_argument("base proposal densities do not match the draws");
  }
  if (!cb.log_p) {
    throw std::invalid_argument("target log density callback is required");
  }
  AdaptationResult res;
  detail::AdaptState st;
  st.draws = draws;
  st.base_log_g = base_log_g;
  res.counters.proposal_evals += draws.rows();
  st.log_p = detail::eval_density(cb.log_p, draws, res.counters.target_evals);
  detail::run_adaptation_loop(WeightKind::common, cb, st, opts, res);
  return res;
}

/// Standard IS estimate (1/S) sum v from an expectation-weight adaptation.
inline double standard_is_estimate(const AdaptationResult& res) {
  return is_estimate(res.final_weights, FunctionValues::Ones(res.final_weights.size()));
}

/// Two-component mixture of implicitly adapted proposals over a half-split sample.
/**
 * The first `n_first` rows are original draws moved by `first_chain`, the rest are original
 * draws moved by `second_chain`. `log_density` is log(g_first + g_second) at every row, where
 * g_c(x) = g(T_c^{-1} x) / |J_c|. The sum (not the average) is stored; the factor 1/2
 * cancels in self-normalized estimates.
 */
struct SplitProposal {
  DrawMatrix draws;
  Eigen::VectorXd log_density;
  Eigen::Index n_first = 0;
  TransformChain first_chain;
  TransformChain second_chain;
  /// Row r of `draws` was built from original draw `permutation[r]`.
  std::vector<Eigen::Index> permutation;
  EvalCounters counters;
};

/// Seeded permutation of 0..S-1.
inline std::vector<Eigen::Index> seeded_permutation(Eigen::Index S, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(S));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

/// Builds the split proposal from two chains acting on the original draws.
/**
 * `base_log_g` holds log g at `original_draws`. After a seeded shuffle of draw order, the
 * first ceil(S/2) draws are moved by `first` and the rest by `second`. Each row needs g at
 * one pseudo-draw (its preimage under the other chain), evaluated with `log_g`.
 */
inline SplitProposal build_split_proposal(
    const TransformChain& first, const TransformChain& second, const DrawMatrix& original_draws,
    const Eigen::VectorXd& base_log_g,
    const std::function<Eigen::VectorXd(const DrawMatrix&)>& log_g, std::uint64_t seed) {
  validate_draws(original_draws);
  const Eigen::Index S = original_draws.rows();
  if (base_log_g.size() != S) {
    throw std::invalid_argument("base proposal densities do not match the draws");
  }
  SplitProposal sp;
  sp.first_chain = first;
  sp.second_chain = second;
  sp.permutation = seeded_permutation(S, seed);
  sp.n_first = (S + 1) / 2;
  const Eigen::Index n_second = S - sp.n_first;

  DrawMatrix first_orig(sp.n_first, original_draws.cols());
  DrawMatrix second_orig(n_second, original_draws.cols());
  Eigen::VectorXd first_base(sp.n_first);
  Eigen::VectorXd second_base(n_second);
  for (Eigen::Index r = 0; r < S; ++r) {
    const Eigen::Index src = sp.permutation[static_cast<std::size_t>(r)];
    if (r < sp.n_first) {
      first_orig.row(r) = original_draws.row(src);
      first_base[r] = base_log_g[src];
    } else {
      second_orig.row(r - sp.n_first) = original_draws.row(src);
      second_base[r - sp.n_first] = base_log_g[src];
    }
  }
  const DrawMatrix first_moved = apply(first, first_orig);
  const DrawMatrix second_moved = apply(second, second_orig);

  // g at each row's preimage under the other chain
  Eigen::VectorXd first_other;
  Eigen::VectorXd second_other;
  if (first.empty() && second.empty()) {
    first_other = first_base;
    second_other = second_base;
  } else {
    const DrawMatrix first_pseudo = apply(invert(second), first_moved);
    const DrawMatrix second_pseudo = apply(invert(first), second_moved);
    first_other = detail::eval_density(log_g, first_pseudo, sp.counters.split_evals);
    second_other = detail::eval_density(log_g, second_pseudo, sp.counters.split_evals);
  }

  sp.draws.resize(S, original_draws.cols());
  sp.draws.topRows(sp.n_first) = first_moved;
  sp.draws.bottomRows(n_second) = second_moved;
  sp.log_density.resize(S);
  const double ld_first = first.total_log_det();
  const double ld_second = second.total_log_det();
  for (Eigen::Index r = 0; r < sp.n_first; ++r) {
    sp.log_density[r] = log_add_exp(first_base[r] - ld_first, first_other[r] - ld_second);
  }
  for (Eigen::Index r = 0; r < n_second; ++r) {
    sp.log_density[sp.n_first + r] =
        log_add_exp(second_other[r] - ld_first, second_base[r] - ld_second);
  }
  return sp;
}

/// Single-chain form: the first half moved by `chain`, the second half left untouched.
inline SplitProposal build_split_proposal(
    const TransformChain& chain, const DrawMatrix& original_draws,
    const Eigen::VectorXd& base_log_g,
    const std::function<Eigen::VectorXd(const DrawMatrix&)>& log_g, std::uint64_t seed) {
  return build_split_proposal(chain, TransformChain{}, original_draws, base_log_g, log_g, seed);
}

/// Self-normalized estimate of E_p[h] with the split proposal, plus its diagnostics.
struct SplitEstimate {
  double estimate = 0.0;
  LogWeightVector common_weights;
  ParetoDiagnostic khat_common;
  ParetoDiagnostic khat_expectation;
  EvalCounters counters;

  /// The larger of the two diagnostics.
  [[nodiscard]] double khat() const { return std::max(khat_common.khat, khat_expectation.khat); }
};

inline SplitEstimate split_snis_estimate(const TargetCallbacks& cb, const SplitProposal& sp,
                                         bool smooth = true,
                                         double k_threshold = kDefaultKThreshold) {
  SplitEstimate out;
  const Eigen::VectorXd log_p = detail::eval_density(cb.log_p, sp.draws, out.counters.target_evals);
  const FunctionValues h = detail::eval_h(cb, sp.draws, out.counters);
  out.common_weights = common_log_weights(log_p, sp.log_density);
  const LogWeightVector v = expectation_log_weights(log_p, sp.log_density, h);
  out.khat_expectation = fit_gpd_tail(v, k_threshold);
  if (smooth) {
    auto [smoothed, diag] = pareto_smooth(out.common_weights, k_threshold);
    out.khat_common = diag;
    out.estimate = snis_estimate(smoothed, h);
  } else {
    out.khat_common = fit_gpd_tail(out.common_weights, k_threshold);
    out.estimate = snis_estimate(out.common_weights, h);
  }
  return out;
}

struct SnisAdaptationResult {
  /// Leg adapted on absolute expectation-specific weights (numerator).
  AdaptationResult numerator;
  /// Leg adapted on common weights (denominator), continuing from the numerator's sample.
  AdaptationResult denominator;
  SplitProposal split;
  SplitEstimate estimate;
  bool numerator_skipped = false;

  [[nodiscard]] bool converged() const { return numerator.converged && denominator.converged; }
  [[nodiscard]] EvalCounters counters() const {
    EvalCounters c = numerator.counters;
    c += denominator.counters;
    c += split.counters;
    c += estimate.counters;
    return c;
  }
};

/// Double adaptation for self-normalized importance sampling.
/**
 * First adapts the sample on |v| until its khat is below the threshold, then continues on
 * the common weights. The split proposal moves one half of the original draws with the
 * numerator chain and the other half with the composition of both chains. When h is
 * constant v is proportional to w, so only the common-weight leg runs.
 */
inline SnisAdaptationResult adapt_snis(const TargetCallbacks& cb, const DrawMatrix& draws,
                                       const AdaptOptions& opts = {}, std::uint64_t seed = 0,
                                       bool smooth_estimate = true) {
  if (!(opts.k_threshold > 0.0)) {
    throw std::invalid_argument("k threshold must be positive");
  }
  SnisAdaptationResult out;
  auto st = detail::initial_state(cb, draws, false, true, out.numerator.counters);
  const Eigen::VectorXd base_log_g = st.base_log_g;
  const bool h_constant =
      st.h.size() > 0 && (st.h.array() == st.h[0]).all() && st.h[0] != 0.0;

  if (h_constant) {
    out.numerator_skipped = true;
    out.numerator.converged = true;
    out.numerator.khat_initial = kNegInf;
    out.numerator.khat_final = kNegInf;
    out.numerator.final_draws = st.draws;
  } else {
    detail::run_adaptation_loop(WeightKind::expectation, cb, st, opts, out.numerator);
  }

  // The common-weight leg starts from the numerator's sample with a fresh history.
  detail::AdaptState wst;
  wst.draws = st.draws;
  wst.base_log_g = base_log_g;
  wst.chain = st.chain;
  wst.log_p = st.log_p;
  wst.h = st.h;
  detail::run_adaptation_loop(WeightKind::common, cb, wst, opts, out.denominator);
  // report only the maps added by this leg
  TransformChain w_only;
  for (std::size_t i = st.chain.size(); i < wst.chain.size(); ++i) {
    w_only.push_back(wst.chain.maps()[i]);
  }
  out.denominator.chain = w_only;

  TransformChain composite = st.chain;
  composite.append(w_only);
  out.split = build_split_proposal(st.chain, composite, draws, base_log_g, cb.log_g, seed);
  out.estimate = split_snis_estimate(cb, out.split, smooth_estimate, opts.k_threshold);
  return out;
}

}  // namespace iwmm

#endif  // IWMM_MOMENT_MATCHING_HPP
