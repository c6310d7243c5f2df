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

#ifndef IWMM_LOO_CV_HPP
#define IWMM_LOO_CV_HPP

#include <iwmm/bayes_models.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/moment_matching.hpp>
#include <iwmm/parallel.hpp>
#include <iwmm/pareto_tail.hpp>
#include <iwmm/random.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

/**
 * \file
 * \brief Leave-one-out cross-validation by Pareto smoothed importance sampling, with adaptive
 * moment matching for difficult folds and optional refits.
 *
 * Per fold the cascade is: PSIS with the full posterior as proposal; if its khat exceeds the
 * threshold, moment matching on the common weights followed by the split proposal estimate;
 * if that still fails and the refit budget allows, sampling the leave-one-out posterior and
 * estimating by simple Monte Carlo, adapted by moment matching when needed.
 */

namespace iwmm {

enum class LooMethod { psis, psis_mm, refit_mc, refit_mm, failed };

inline std::string_view to_string(LooMethod m) {
  switch (m) {
    case LooMethod::psis:
      return "psis";
    case LooMethod::psis_mm:
      return "psis_mm";
    case LooMethod::refit_mc:
      return "refit_mc";
    case LooMethod::refit_mm:
      return "refit_mm";
    case LooMethod::failed:
      return "failed";
  }
  return "failed";
}

struct LooFoldReport {
  /// Zero-based observation index.
  Eigen::Index fold = 0;
  double elpd = std::numeric_limits<double>::quiet_NaN();
  /// khat of the raw leave-one-out weights.
  double khat_initial = kPosInf;
  /// khat after moment matching on the common weights (equals khat_initial without it).
  double khat_final = kPosInf;
  /// khat of the expectation-specific weights w p(y_i | theta) after moment matching; NaN
  /// when no adaptation ran (before adaptation these weights are constant).
  double khat_expectation = std::numeric_limits<double>::quiet_NaN();
  /// Larger of the common and expectation-specific khat of the split-proposal weights;
  /// NaN when no split estimate was formed.
  double khat_split = std::numeric_limits<double>::quiet_NaN();
  /// khat of p(y_i | theta) over leave-one-out posterior draws; NaN without a refit.
  double khat_refit = std::numeric_limits<double>::quiet_NaN();
  LooMethod method = LooMethod::psis;
  int transforms_accepted = 0;
  int transforms_attempted = 0;
  EvalCounters counters;
  std::string warning;

  /// khat of the weights behind `elpd`: the raw leave-one-out weights for PSIS, the split
  /// proposal weights (larger of common and expectation-specific) after moment matching, the
  /// refit diagnostic for refits.
  [[nodiscard]] double khat_reported() const {
    switch (method) {
      case LooMethod::refit_mc:
      case LooMethod::refit_mm:
        return khat_refit;
      case LooMethod::psis:
        return khat_initial;
      default:
        return std::isnan(khat_split) ? khat_final : khat_split;
    }
  }
};

struct LooResult {
  std::vector<LooFoldReport> folds;
  double elpd_loo = 0.0;
  /// Folds left with khat above the threshold: khat_final for folds estimated from the full
  /// posterior sample, the refit diagnostic for refitted folds.
  int n_bad = 0;
  double k_threshold = kDefaultKThreshold;
};

struct LooOptions {
  double k_threshold = kDefaultKThreshold;
  /// Pareto smoothing for moment weights and final estimates.
  bool smoothing = true;
  /// Maximum number of leave-one-out refits across the whole run.
  int refit_budget = 0;
  std::uint64_t seed = 0;
  /// Worker threads; 0 uses all available cores.
  unsigned threads = 1;
  int max_accepted = 30;
  RwmConfig sampler{};
};

/// Leave-one-out log weights: log w = -log p(y_i | theta).
inline LogWeightVector loo_log_weights(const Eigen::VectorXd& loglik_i) {
  if (!loglik_i.allFinite()) {
    throw std::domain_error("log likelihood values must be finite");
  }
  return LogWeightVector(-loglik_i);
}

namespace detail {

inline void finish_result(LooResult& res) {
  res.elpd_loo = 0.0;
  res.n_bad = 0;
  for (const auto& f : res.folds) {
    res.elpd_loo += f.elpd;
    const bool refit = f.method == LooMethod::refit_mc || f.method == LooMethod::refit_mm;
    if (!((refit ? f.khat_refit : f.khat_final) <= res.k_threshold)) {
      ++res.n_bad;
    }
  }
}

/// Pareto smoothing when enabled, plain tail diagnostic otherwise.
inline std::pair<LogWeightVector, ParetoDiagnostic> maybe_smooth(const LogWeightVector& w,
                                                                 bool smoothing,
                                                                 double threshold) {
  if (smoothing) {
    return pareto_smooth(w, threshold);
  }
  return {w, fit_gpd_tail(w, threshold)};
}

}  // namespace detail

/// Shared inputs of a leave-one-out run over one posterior sample.
class LooProblem {
 public:
  LooProblem(const Model& model, const Dataset& data, DrawMatrix draws, Eigen::VectorXd log_post)
      : model_(&model), data_(&data), draws_(std::move(draws)), log_post_(std::move(log_post)) {
    model.validate(data);
    validate_draws(draws_);
    if (draws_.cols() != model.dim(data)) {
      throw std::invalid_argument("draws do not match the model dimension");
    }
    if (log_post_.size() != draws_.rows()) {
      throw std::invalid_argument("log posterior values do not match the draws");
    }
    if (!log_post_.allFinite()) {
      throw std::domain_error("log posterior values must be finite");
    }
    loglik_.resize(draws_.rows(), data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      loglik_.col(i) = model.log_lik_rows(draws_, data, i);
    }
  }

  [[nodiscard]] const Model& model() const { return *model_; }
  [[nodiscard]] const Dataset& data() const { return *data_; }
  [[nodiscard]] const DrawMatrix& draws() const { return draws_; }
  [[nodiscard]] const Eigen::VectorXd& log_post() const { return log_post_; }
  [[nodiscard]] Eigen::VectorXd loglik(Eigen::Index i) const { return loglik_.col(i); }
  [[nodiscard]] Eigen::Index n() const { return data_->n(); }
  [[nodiscard]] Eigen::Index S() const { return draws_.rows(); }

  /// Offset between the supplied log posterior and the model's log joint.
  /**
   * The split proposal evaluates the full posterior at pseudo-draws through the model; this
   * offset keeps those values on the scale of the supplied ones. Computed once per run.
   */
  [[nodiscard]] double log_post_offset() const {
    std::call_once(offset_flag_, [this] {
      offset_ = (log_post_ - model_->log_joint_rows(draws_, *data_)).mean();
    });
    return offset_;
  }

 private:
  const Model* model_;
  const Dataset* data_;
  DrawMatrix draws_;
  Eigen::VectorXd log_post_;
  Eigen::MatrixXd loglik_;
  mutable std::once_flag offset_flag_;
  mutable double offset_ = 0.0;
};

/// PSIS estimate for fold i.
inline LooFoldReport psis_loo_fold(const LooProblem& prob, Eigen::Index i,
                                   const LooOptions& opts = {}) {
  const Eigen::VectorXd ll = prob.loglik(i);
  const LogWeightVector lw = loo_log_weights(ll);
  auto [w, diag] = detail::maybe_smooth(lw, opts.smoothing, opts.k_threshold);
  LooFoldReport rep;
  rep.fold = i;
  rep.elpd = log_snis_estimate(w, ll);
  rep.khat_initial = diag.khat;
  rep.khat_final = diag.khat;
  rep.method = diag.khat <= opts.k_threshold ? LooMethod::psis : LooMethod::failed;
  return rep;
}

/// Fold i without refits: PSIS, then moment matching plus split proposal when PSIS fails.
inline LooFoldReport mm_loo_fold(const LooProblem& prob, Eigen::Index i,
                                 const LooOptions& opts = {}) {
  LooFoldReport rep = psis_loo_fold(prob, i, opts);
  if (rep.method == LooMethod::psis) {
    return rep;
  }
  const Model& model = prob.model();
  const Dataset& data = prob.data();
  const double offset = prob.log_post_offset();

  TargetCallbacks cb;
  cb.log_p = [&model, &data, i](const DrawMatrix& x) -> Eigen::VectorXd {
    return model.log_joint_rows(x, data) - model.log_lik_rows(x, data, i);
  };
  cb.log_g = [&model, &data, offset](const DrawMatrix& x) -> Eigen::VectorXd {
    return model.log_joint_rows(x, data).array() + offset;
  };

  AdaptOptions aopts;
  aopts.k_threshold = opts.k_threshold;
  aopts.smooth_moment_weights = opts.smoothing;
  aopts.max_accepted = opts.max_accepted;
  const AdaptationResult ad = adapt_common_weights(cb, prob.draws(), prob.log_post(), aopts);
  rep.counters += ad.counters;
  rep.khat_final = ad.khat_final;
  rep.transforms_accepted = static_cast<int>(ad.accepted_count());
  rep.transforms_attempted = static_cast<int>(ad.khat_history.size());
  if (!ad.chain.empty()) {
    rep.counters.function_evals += ad.final_draws.rows();
    const Eigen::VectorXd ll_final = model.log_lik_rows(ad.final_draws, data, i);
    rep.khat_expectation =
        fit_gpd_tail(LogWeightVector(ad.final_weights.log_mag + ll_final), opts.k_threshold).khat;
  }

  const SplitProposal sp = build_split_proposal(ad.chain, prob.draws(), prob.log_post(), cb.log_g,
                                                derive_seed(opts.seed, static_cast<std::uint64_t>(i)));
  rep.counters += sp.counters;
  const Eigen::VectorXd log_p =
      detail::eval_density(cb.log_p, sp.draws, rep.counters.target_evals);
  rep.counters.function_evals += sp.draws.rows();
  const Eigen::VectorXd ll = model.log_lik_rows(sp.draws, data, i);
  const LogWeightVector lw = common_log_weights(log_p, sp.log_density);
  auto [w, diag] = detail::maybe_smooth(lw, opts.smoothing, opts.k_threshold);
  const LogWeightVector lv(lw.log_mag + ll);
  const double khat_v = fit_gpd_tail(lv, opts.k_threshold).khat;
  rep.khat_split = std::max(diag.khat, khat_v);
  rep.elpd = log_snis_estimate(w, ll);
  if (ad.converged) {
    rep.method = LooMethod::psis_mm;
  } else {
    rep.method = LooMethod::failed;
    rep.warning = "moment matching did not reach the khat threshold; more draws may help";
  }
  return rep;
}

/// Refit for fold i: sample p(theta | y_{-i}) and estimate p(y_i | y_{-i}) by simple Monte
/// Carlo, with moment matching when the expectation-specific khat is too high.
/**
 * `loo_draws`, when given, replaces sampling: they must come from p(theta | y_{-i}). A
 * sampler failure marks the fold failed and keeps its previous estimate.
 */
inline LooFoldReport refit_loo_fold(const Model& model, const Dataset& data, Eigen::Index i,
                                    Eigen::Index S, const LooOptions& opts, LooFoldReport rep,
                                    const DrawMatrix* loo_draws = nullptr) {
  const Dataset rest = data.without(i);
  DrawMatrix draws;
  if (loo_draws != nullptr) {
    draws = *loo_draws;
    S = draws.rows();
  } else {
    const std::uint64_t seed =
        derive_seed(derive_seed(opts.seed, 0x5eedULL), static_cast<std::uint64_t>(i));
    try {
      draws = sample_posterior(model, rest, S, seed, opts.sampler);
    } catch (const SamplerFailure& e) {
      rep.method = LooMethod::failed;
      rep.warning = std::string("refit sampler failed: ") + e.what();
      return rep;
    }
  }
  rep.counters.function_evals += S;
  const Eigen::VectorXd ll = model.log_lik_rows(draws, data, i);
  const LogWeightVector lv(ll, true);
  auto [v, diag] = detail::maybe_smooth(lv, opts.smoothing, opts.k_threshold);
  rep.khat_refit = diag.khat;
  if (diag.khat <= opts.k_threshold) {
    rep.method = LooMethod::refit_mc;
    rep.elpd = log_sum_exp(v.log_mag) - std::log(static_cast<double>(S));
    rep.warning.clear();
    return rep;
  }

  const double shift = ll.maxCoeff();
  TargetCallbacks cb;
  cb.log_p = [&model, &rest](const DrawMatrix& x) -> Eigen::VectorXd {
    return model.log_joint_rows(x, rest);
  };
  cb.h = [&model, &data, i, shift](const DrawMatrix& x) -> FunctionValues {
    return (model.log_lik_rows(x, data, i).array() - shift).exp();
  };
  AdaptOptions aopts;
  aopts.k_threshold = opts.k_threshold;
  aopts.smooth_moment_weights = opts.smoothing;
  aopts.max_accepted = opts.max_accepted;
  const AdaptationResult ad = adapt_simple_mc(cb, draws, aopts);
  rep.counters += ad.counters;
  rep.khat_refit = ad.khat_final;
  const LogWeightVector vs =
      detail::maybe_smooth(ad.final_weights, opts.smoothing, opts.k_threshold).first;
  rep.elpd = log_sum_exp(vs.log_mag) - std::log(static_cast<double>(S)) + shift;
  if (ad.converged) {
    rep.method = LooMethod::refit_mm;
    rep.warning.clear();
  } else {
    rep.method = LooMethod::failed;
    rep.warning = "refit with moment matching did not reach the khat threshold; more draws may help";
  }
  return rep;
}

/// PSIS-LOO over all folds.
inline LooResult psis_loo(const Model& model, const Dataset& data, const DrawMatrix& draws,
                          const Eigen::VectorXd& log_post, const LooOptions& opts = {}) {
  const LooProblem prob(model, data, draws, log_post);
  LooResult res;
  res.k_threshold = opts.k_threshold;
  res.folds.resize(static_cast<std::size_t>(prob.n()));
  parallel_for(res.folds.size(), opts.threads, [&](std::size_t i) {
    res.folds[i] = psis_loo_fold(prob, static_cast<Eigen::Index>(i), opts);
  });
  detail::finish_result(res);
  return res;
}

/// Full moment-matching LOO cascade.
/**
 * Refits go to failed folds in increasing index order until `opts.refit_budget` is spent, so
 * the outcome does not depend on scheduling.
 */
inline LooResult mm_loo(const Model& model, const Dataset& data, const DrawMatrix& draws,
                        const Eigen::VectorXd& log_post, const LooOptions& opts = {}) {
  const LooProblem prob(model, data, draws, log_post);
  LooResult res;
  res.k_threshold = opts.k_threshold;
  res.folds.resize(static_cast<std::size_t>(prob.n()));
  parallel_for(res.folds.size(), opts.threads, [&](std::size_t i) {
    res.folds[i] = mm_loo_fold(prob, static_cast<Eigen::Index>(i), opts);
  });

  std::vector<std::size_t> refits;
  for (std::size_t i = 0; i < res.folds.size(); ++i) {
    if (res.folds[i].method == LooMethod::failed &&
        static_cast<int>(refits.size()) < opts.refit_budget) {
      refits.push_back(i);
    }
  }
  parallel_for(refits.size(), opts.threads, [&](std::size_t r) {
    const std::size_t i = refits[r];
    res.folds[i] = refit_loo_fold(model, data, static_cast<Eigen::Index>(i), prob.S(), opts,
                                  res.folds[i]);
  });
  for (auto& f : res.folds) {
    if (f.method == LooMethod::failed && f.warning.empty()) {
      f.warning = "estimate unreliable; more draws may help";
    }
  }
  detail::finish_result(res);
  return res;
}

/// Brute-force LOO: sample every leave-one-out posterior and average p(y_i | theta).
inline LooResult naive_loo(const Model& model, const Dataset& data, Eigen::Index S,
                           const LooOptions& opts = {}) {
  model.validate(data);
  LooResult res;
  res.k_threshold = opts.k_threshold;
  res.folds.resize(static_cast<std::size_t>(data.n()));
  parallel_for(res.folds.size(), opts.threads, [&](std::size_t idx) {
    const auto i = static_cast<Eigen::Index>(idx);
    const std::uint64_t seed =
        derive_seed(derive_seed(opts.seed, 0x5eedULL), static_cast<std::uint64_t>(i));
    LooFoldReport rep;
    rep.fold = i;
    DrawMatrix draws;
    try {
      draws = sample_posterior(model, data.without(i), S, seed, opts.sampler);
    } catch (const SamplerFailure& e) {
      rep.method = LooMethod::failed;
      rep.warning = std::string("refit sampler failed: ") + e.what();
      res.folds[idx] = rep;
      return;
    }
    const Eigen::VectorXd ll = model.log_lik_rows(draws, data, i);
    rep.method = LooMethod::refit_mc;
    rep.elpd = log_sum_exp(ll) - std::log(static_cast<double>(S));
    rep.khat_refit = fit_gpd_tail(LogWeightVector(ll, true), opts.k_threshold).khat;
    rep.khat_initial = rep.khat_refit;
    rep.khat_final = rep.khat_refit;
    rep.counters.function_evals = S;
    res.folds[idx] = rep;
  });
  detail::finish_result(res);
  return res;
}

}  // namespace iwmm

#endif  // IWMM_LOO_CV_HPP
