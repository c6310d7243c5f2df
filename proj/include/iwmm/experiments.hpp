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

#ifndef IWMM_EXPERIMENTS_HPP
#define IWMM_EXPERIMENTS_HPP

#include <iwmm/baselines.hpp>
#include <iwmm/bayes_models.hpp>
#include <iwmm/loo_cv.hpp>
#include <iwmm/random.hpp>
#include <iwmm/synthetic.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * \file
 * \brief The Gaussian single-outlier experiment: leave-one-out estimates for the last
 * observation by several methods, next to the analytic value.
 */

namespace iwmm {

inline const std::vector<std::string>& outlier_experiment_methods() {
  static const std::vector<std::string> all{"naive",  "naive_mm", "psis",     "psis_mm",
                                            "ais_g",  "ais_t",    "ais_g_x2", "ais_t_x2"};
  return all;
}

struct OutlierExperimentConfig {
  Eigen::Index draws = 4000;
  /// Seed of the fixed standard normal observations.
  std::uint64_t data_seed = 20260101;
  Eigen::Index n_base = 29;
  double k_threshold = kDefaultKThreshold;
  bool smoothing = true;
  int ais_max_iter = 10;
  std::vector<std::string> methods = outlier_experiment_methods();
};

struct OutlierMethodResult {
  std::string method;
  double elpd = 0.0;
  double analytic = 0.0;
  /// Larger of the common and expectation-specific khat behind the estimate.
  double khat = kPosInf;
  EvalCounters counters;
  int iterations = 0;
};

/// Runs every configured method once for outlier value `last_value` and replicate `seed`.
inline std::vector<OutlierMethodResult> run_outlier_experiment(double last_value,
                                                               std::uint64_t seed,
                                                               const OutlierExperimentConfig& cfg) {
  const GaussianModel model;
  const Dataset data = gaussian_outlier_data(cfg.data_seed, last_value, cfg.n_base);
  const Eigen::Index i = cfg.n_base;
  const double analytic = gaussian_analytic_loo_lpd(data, i);
  const DrawMatrix draws = gaussian_exact_posterior(data, cfg.draws, derive_seed(seed, 1));
  const Eigen::VectorXd log_post = model.log_joint_rows(draws, data);

  LooOptions lopts;
  lopts.k_threshold = cfg.k_threshold;
  lopts.smoothing = cfg.smoothing;
  lopts.seed = derive_seed(seed, 2);

  std::vector<OutlierMethodResult> out;
  auto push = [&](const std::string& name, double elpd, double khat, const EvalCounters& c,
                  int iterations) {
    out.push_back({name, elpd, analytic, khat, c, iterations});
  };

  std::optional<LooProblem> prob;
  for (const auto& m : cfg.methods) {
    if (m == "naive" || m == "naive_mm") {
      const DrawMatrix loo_draws =
          gaussian_exact_posterior(data.without(i), cfg.draws, derive_seed(seed, 3));
      const Eigen::VectorXd ll = model.log_lik_rows(loo_draws, data, i);
      if (m == "naive") {
        const double khat =
            pareto_smooth(LogWeightVector(ll, true), cfg.k_threshold).second.khat;
        EvalCounters c;
        c.function_evals = cfg.draws;
        push(m, log_sum_exp(ll) - std::log(static_cast<double>(cfg.draws)), khat, c, 0);
      } else {
        LooFoldReport rep;
        rep.fold = i;
        // the "naive" draws, adapted when their khat is too high
        rep = refit_loo_fold(model, data, i, cfg.draws, lopts, rep, &loo_draws);
        push(m, rep.elpd, rep.khat_refit, rep.counters, rep.transforms_accepted);
      }
    } else if (m == "psis" || m == "psis_mm") {
      if (!prob) {
        prob.emplace(model, data, draws, log_post);
      }
      const LooFoldReport rep =
          m == "psis" ? psis_loo_fold(*prob, i, lopts) : mm_loo_fold(*prob, i, lopts);
      push(m, rep.elpd, rep.khat_reported(), rep.counters, rep.transforms_accepted);
    } else if (m == "ais_g" || m == "ais_t" || m == "ais_g_x2" || m == "ais_t_x2") {
      const auto family =
          m.rfind("ais_t", 0) == 0 ? ProposalFamily::student_t3 : ProposalFamily::gaussian;
      AisTarget target;
      target.log_p = [&model, &data, i](const DrawMatrix& x) -> Eigen::VectorXd {
        return model.log_joint_rows(x, data) - model.log_lik_rows(x, data, i);
      };
      target.log_h = [&model, &data, i](const DrawMatrix& x) -> Eigen::VectorXd {
        return model.log_lik_rows(x, data, i);
      };
      AisOptions aopts;
      aopts.draws_per_iter = cfg.draws;
      aopts.max_iter = cfg.ais_max_iter;
      aopts.k_threshold = cfg.k_threshold;
      aopts.smoothing = cfg.smoothing;
      aopts.double_adapt = m.size() > 3 && m.substr(m.size() - 3) == "_x2";
      aopts.seed = derive_seed(seed, 4);
      const AisResult r = ais_run(target, ParametricProposal::from_sample(family, draws), aopts);
      push(m, r.log_estimate, r.khat, r.counters, r.iterations);
    } else {
      throw std::invalid_argument("unknown method '" + m + "'");
    }
  }
  return out;
}

}  // namespace iwmm

#endif  // IWMM_EXPERIMENTS_HPP
