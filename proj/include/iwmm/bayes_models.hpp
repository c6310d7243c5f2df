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

#ifndef IWMM_BAYES_MODELS_HPP
#define IWMM_BAYES_MODELS_HPP

#include <iwmm/affine_adapt.hpp>
#include <iwmm/errors.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/random.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

/**
 * \file
 * \brief Desk-scale Bayesian models with unconstrained-space log densities, pointwise
 * likelihoods, exact conjugate samplers where available, and a random-walk Metropolis
 * sampler for the rest.
 */

namespace iwmm {

/// Observations y with optional design matrix X (n x P) and offset (length n).
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::VectorXd offset;

  [[nodiscard]] Eigen::Index n() const { return y.size(); }
  [[nodiscard]] bool has_design() const { return X.size() > 0; }

  /// Offset, or zeros when absent.
  [[nodiscard]] Eigen::VectorXd offset_or_zero() const {
    return offset.size() == n() ? offset : Eigen::VectorXd::Zero(n());
  }

  /// Copy of the data with observation i removed.
  [[nodiscard]] Dataset without(Eigen::Index i) const {
    if (i < 0 || i >= n()) {
      throw std::out_of_range("observation index out of range");
    }
    auto drop_row = [i](const auto& m) {
      using M = std::decay_t<decltype(m)>;
      M out(m.rows() - 1, m.cols());
      out.topRows(i) = m.topRows(i);
      out.bottomRows(m.rows() - i - 1) = m.bottomRows(m.rows() - i - 1);
      return out;
    };
    Dataset d;
    d.y = drop_row(Eigen::MatrixXd(y)).col(0);
    if (has_design()) {
      d.X = drop_row(X);
    }
    if (offset.size() == n()) {
      d.offset = drop_row(Eigen::MatrixXd(offset)).col(0);
    }
    return d;
  }
};

/// Interface every bundled model implements. All densities are unnormalized log densities
/// over the unconstrained parameter vector and include the Jacobian of the constraining map.
class Model {
 public:
  virtual ~Model() = default;

  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual Eigen::Index dim(const Dataset& data) const = 0;
  [[nodiscard]] virtual std::vector<std::string> parameter_names(const Dataset& data) const = 0;
  /// Throws std::invalid_argument when `data` does not fit the model.
  virtual void validate(const Dataset& data) const = 0;

  [[nodiscard]] virtual double log_lik_point(const Eigen::VectorXd& theta_u, const Dataset& data,
                                             Eigen::Index i) const = 0;
  /// Log prior in unconstrained coordinates, including the constraining Jacobian.
  [[nodiscard]] virtual double log_prior(const Eigen::VectorXd& theta_u) const = 0;

  [[nodiscard]] virtual double log_joint_unconstrained(const Eigen::VectorXd& theta_u,
                                                       const Dataset& data) const {
    double lp = log_prior(theta_u);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      lp += log_lik_point(theta_u, data, i);
    }
    return lp;
  }

  [[nodiscard]] virtual Eigen::VectorXd constrain(const Eigen::VectorXd& theta_u) const {
    return theta_u;
  }
  [[nodiscard]] virtual Eigen::VectorXd unconstrain(const Eigen::VectorXd& theta_c) const {
    return theta_c;
  }
  /// log |d constrain / d theta_u|.
  [[nodiscard]] virtual double log_abs_det_constrain(const Eigen::VectorXd& /*theta_u*/) const {
    return 0.0;
  }
  /// Log joint density in constrained coordinates.
  [[nodiscard]] double log_joint_constrained(const Eigen::VectorXd& theta_c,
                                             const Dataset& data) const {
    const Eigen::VectorXd u = unconstrain(theta_c);
    return log_joint_unconstrained(u, data) - log_abs_det_constrain(u);
  }

  /// Exact posterior draws in unconstrained coordinates, when the model has them.
  [[nodiscard]] virtual std::optional<DrawMatrix> exact_posterior(const Dataset& /*data*/,
                                                                  Eigen::Index /*S*/,
                                                                  std::uint64_t /*seed*/) const {
    return std::nullopt;
  }

  /// Starting point for MCMC (the posterior mode where cheaply available).
  [[nodiscard]] virtual Eigen::VectorXd initial_point(const Dataset& data) const {
    return Eigen::VectorXd::Zero(dim(data));
  }
  /// Random-walk proposal covariance hint at `at` (e.g. a Laplace approximation).
  [[nodiscard]] virtual Eigen::MatrixXd proposal_covariance(const Dataset& data,
                                                            const Eigen::VectorXd& /*at*/) const {
    return Eigen::MatrixXd::Identity(dim(data), dim(data));
  }

  /// Log joint at every row of `draws`.
  [[nodiscard]] virtual Eigen::VectorXd log_joint_rows(const DrawMatrix& draws,
                                                       const Dataset& data) const {
    Eigen::VectorXd out(draws.rows());
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
      out[s] = log_joint_unconstrained(draws.row(s).transpose(), data);
    }
    return out;
  }

  /// log p(y_i | theta) at every row of `draws`.
  [[nodiscard]] virtual Eigen::VectorXd log_lik_rows(const DrawMatrix& draws, const Dataset& data,
                                                     Eigen::Index i) const {
    Eigen::VectorXd out(draws.rows());
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
      out[s] = log_lik_point(draws.row(s).transpose(), data, i);
    }
    return out;
  }
};

namespace detail {

inline double student_t_log_pdf(double x, double dof, double loc, double scale) {
  const double z = (x - loc) / scale;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * std::numbers::pi) - std::log(scale) -
         0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

inline double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

inline void require_finite(const Dataset& data) {
  if (!data.y.allFinite() || (data.X.size() > 0 && !data.X.allFinite()) ||
      (data.offset.size() > 0 && !data.offset.allFinite())) {
    throw std::invalid_argument("dataset contains non-finite entries");
  }
}

}  // namespace detail

// -- Gaussian model with unknown mean and variance --------------------------------------------

/// y_i ~ Normal(mu, sigma^2) with flat priors on mu and log sigma; theta_u = (mu, log sigma).
class GaussianModel final : public Model {
 public:
  [[nodiscard]] std::string name() const override { return "gaussian"; }
  [[nodiscard]] Eigen::Index dim(const Dataset& /*data*/) const override { return 2; }
  [[nodiscard]] std::vector<std::string> parameter_names(const Dataset& /*data*/) const override {
    return {"mu", "log_sigma"};
  }
  void validate(const Dataset& data) const override {
    if (data.n() < 2) {
      throw std::invalid_argument("gaussian model needs at least two observations");
    }
    detail::require_finite(data);
  }

  [[nodiscard]] double log_lik_point(const Eigen::VectorXd& theta_u, const Dataset& data,
                                     Eigen::Index i) const override {
    return detail::normal_log_pdf(data.y[i], theta_u[0], std::exp(theta_u[1]));
  }
  [[nodiscard]] double log_prior(const Eigen::VectorXd& /*theta_u*/) const override { return 0.0; }

  [[nodiscard]] Eigen::VectorXd constrain(const Eigen::VectorXd& u) const override {
    return Eigen::Vector2d(u[0], std::exp(u[1]));
  }
  [[nodiscard]] Eigen::VectorXd unconstrain(const Eigen::VectorXd& c) const override {
    return Eigen::Vector2d(c[0], std::log(c[1]));
  }
  [[nodiscard]] double log_abs_det_constrain(const Eigen::VectorXd& u) const override {
    return u[1];
  }

  [[nodiscard]] std::optional<DrawMatrix> exact_posterior(const Dataset& data, Eigen::Index S,
                                                          std::uint64_t seed) const override;

  [[nodiscard]] Eigen::VectorXd initial_point(const Dataset& data) const override {
    const double mean = data.y.mean();
    const double var = (data.y.array() - mean).square().mean();
    return Eigen::Vector2d(mean, 0.5 * std::log(std::max(var, 1e-12)));
  }
  [[nodiscard]] Eigen::MatrixXd proposal_covariance(const Dataset& data,
                                                    const Eigen::VectorXd& at) const override {
    const double n = static_cast<double>(data.n());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    cov(0, 0) = std::exp(2.0 * at[1]) / n;
    cov(1, 1) = 1.0 / (2.0 * n);
    return cov;
  }

  [[nodiscard]] Eigen::VectorXd log_joint_rows(const DrawMatrix& draws,
                                               const Dataset& data) const override {
    const double n = static_cast<double>(data.n());
    const double ybar = data.y.mean();
    const double ss = (data.y.array() - ybar).square().sum();
    Eigen::VectorXd out(draws.rows());
    for (Eigen::Index s = 0; s < draws.rows(); ++s) {
      const double mu = draws(s, 0);
      const double log_sigma = draws(s, 1);
      const double sum_sq = ss + n * (ybar - mu) * (ybar - mu);
      out[s] = -0.5 * n * std::log(2.0 * std::numbers::pi) - n * log_sigma -
               0.5 * sum_sq * std::exp(-2.0 * log_sigma);
    }
    return out;
  }
};

/// Exact draws of (mu, log sigma) under flat priors on mu and log sigma.
/**
 * sigma^2 ~ Scaled-Inv-chi^2(n - 1, s^2) and mu | sigma^2 ~ Normal(ybar, sigma^2 / n).
 */
inline DrawMatrix gaussian_exact_posterior(const Dataset& data, Eigen::Index S, std::uint64_t seed) {
  const Eigen::Index n = data.n();
  if (n < 3) {
    throw std::invalid_argument("gaussian posterior needs at least three observations");
  }
  detail::require_finite(data);
  if (S < 1) {
    throw std::invalid_argument("need at least one draw");
  }
  const double ybar = data.y.mean();
  const double s2 = (data.y.array() - ybar).square().sum() / static_cast<double>(n - 1);
  if (!(s2 > 0.0)) {
    throw DegenerateSampleError("degenerate data: sample variance is zero");
  }
  Rng rng(seed);
  std::chi_squared_distribution<double> chi2(static_cast<double>(n - 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  DrawMatrix draws(S, 2);
  for (Eigen::Index s = 0; s < S; ++s) {
    const double sigma2 = static_cast<double>(n - 1) * s2 / chi2(rng);
    draws(s, 0) = ybar + std::sqrt(sigma2 / static_cast<double>(n)) * normal(rng);
    draws(s, 1) = 0.5 * std::log(sigma2);
  }
  return draws;
}

inline std::optional<DrawMatrix> GaussianModel::exact_posterior(const Dataset& data,
                                                                Eigen::Index S,
                                                                std::uint64_t seed) const {
  return gaussian_exact_posterior(data, S, seed);
}

/// Analytic log p(y_i | y_{-i}) for the Gaussian model: Student-t with m - 1 degrees of
/// freedom, location mean(y_{-i}) and scale sqrt(1 + 1/m) sd(y_{-i}), m = n - 1.
inline double gaussian_analytic_loo_lpd(const Dataset& data, Eigen::Index i) {
  const Dataset rest = data.without(i);
  const Eigen::Index m = rest.n();
  if (m < 3) {
    throw std::invalid_argument("leave-one-out set needs at least three observations");
  }
  const double mean = rest.y.mean();
  const double var = (rest.y.array() - mean).square().sum() / static_cast<double>(m - 1);
  if (!(var > 0.0)) {
    throw DegenerateSampleError("degenerate leave-one-out set: zero variance");
  }
  const double scale = std::sqrt(1.0 + 1.0 / static_cast<double>(m)) * std::sqrt(var);
  return detail::student_t_log_pdf(data.y[i], static_cast<double>(m - 1), mean, scale);
}

// -- Gaussian model with known variance -------------------------------------------------------

/// y_i ~ Normal(mu, sigma^2) with sigma known and a flat prior on mu.
class KnownVarianceGaussianModel final : public Model {
 public:
  explicit KnownVarianceGaussianModel(double sigma = 1.0) : sigma_(sigma) {
    if (!(sigma > 0.0)) {
      throw std::invalid_argument("known standard deviation must be positive");
    }
  }

  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] std::string name() const override { return "gaussian_known_sigma"; }
  [[nodiscard]] Eigen::Index dim(const Dataset& /*data*/) const override { return 1; }
  [[nodiscard]] std::vector<std::string> parameter_names(const Dataset& /*data*/) const override {
    return {"mu"};
  }
  void validate(const Dataset& data) const override {
    if (data.n() < 2) {
      throw std::invalid_argument("gaussian model needs at least two observations");
    }
    detail::require_finite(data);
  }
  [[nodiscard]] double log_lik_point(const Eigen::VectorXd& theta_u, const Dataset& data,
                                     Eigen::Index i) const override {
    return detail::normal_log_pdf(data.y[i], theta_u[0], sigma_);
  }
  [[nodiscard]] double log_prior(const Eigen::VectorXd& /*theta_u*/) const override { return 0.0; }

  [[nodiscard]] std::optional<DrawMatrix> exact_posterior(const Dataset& data, Eigen::Index S,
                                                          std::uint64_t seed) const override {
    validate(data);
    Rng rng(seed);
    const double sd = sigma_ / std::sqrt(static_cast<double>(data.n()));
    return DrawMatrix((data.y.mean() + sd * standard_normal_vector(S, rng).array()).matrix());
  }
  [[nodiscard]] Eigen::VectorXd initial_point(const Dataset& data) const override {
    return Eigen::VectorXd::Constant(1, data.y.mean());
  }
  [[nodiscard]] Eigen::MatrixXd proposal_covariance(const Dataset& data,
                                                    const Eigen::VectorXd& /*at*/) const override {
    return Eigen::MatrixXd::Constant(1, 1, sigma_ * sigma_ / static_cast<double>(data.n()));
  }

  /// Posterior of mu given all of `data`: Normal(mean, sd).
  [[nodiscard]] std::pair<double, double> posterior(const Dataset& data) const {
    return {data.y.mean(), sigma_ / std::sqrt(static_cast<double>(data.n()))};
  }

  /// log p(y_i | y_{-i}) = log Normal(y_i; mean(y_{-i}), sigma^2 (1 + 1/m)).
  [[nodiscard]] double analytic_loo_lpd(const Dataset& data, Eigen::Index i) const {
    const Dataset rest = data.without(i);
    const double m = static_cast<double>(rest.n());
    return detail::normal_log_pdf(data.y[i], rest.y.mean(), sigma_ * std::sqrt(1.0 + 1.0 / m));
  }

 private:
  double sigma_;
};

// -- Poisson regression with log link and offset ----------------------------------------------

/// Linear predictors beyond this magnitude are clamped before exponentiation.
inline constexpr double kLinearPredictorClamp = 500.0;

struct PoissonLogJoint {
  double value = 0.0;
  /// True when some linear predictor was clamped to +/-500.
  bool clamped = false;
};

/// sum_i [y_i eta_i - exp(eta_i) - log(y_i!)] with eta = X beta + offset and a flat prior.
inline PoissonLogJoint poisson_glm_logjoint(const Eigen::VectorXd& beta, const Dataset& data) {
  if (!data.has_design() || data.X.cols() != beta.size()) {
    throw std::invalid_argument("poisson model needs a design matrix matching beta");
  }
  PoissonLogJoint out;
  const Eigen::VectorXd eta = data.X * beta + data.offset_or_zero();
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double e = eta[i];
    if (std::abs(e) > kLinearPredictorClamp) {
      e = std::copysign(kLinearPredictorClamp, e);
      out.clamped = true;
    }
    out.value += data.y[i] * e - std::exp(e) - std::lgamma(data.y[i] + 1.0);
  }
  return out;
}

/// Gradient X^T (y - exp(eta)) of the Poisson log joint.
inline Eigen::VectorXd poisson_glm_gradient(const Eigen::VectorXd& beta, const Dataset& data) {
  const Eigen::VectorXd eta =
      (data.X * beta + data.offset_or_zero()).cwiseMax(-kLinearPredictorClamp).cwiseMin(kLinearPredictorClamp);
  return data.X.transpose() * (data.y.array() - eta.array().exp()).matrix();
}

/// Hessian -X^T diag(exp(eta)) X of the Poisson log joint.
inline Eigen::MatrixXd poisson_glm_hessian(const Eigen::VectorXd& beta, const Dataset& data) {
  const Eigen::VectorXd eta =
      (data.X * beta + data.offset_or_zero()).cwiseMax(-kLinearPredictorClamp).cwiseMin(kLinearPredictorClamp);
  return -(data.X.transpose() * eta.array().exp().matrix().asDiagonal() * data.X);
}

class PoissonGlmModel final : public Model {
 public:
  [[nodiscard]] std::string name() const override { return "poisson_glm"; }
  [[nodiscard]] Eigen::Index dim(const Dataset& data) const override { return data.X.cols(); }
  [[nodiscard]] std::vector<std::string> parameter_names(const Dataset& data) const override {
    std::vector<std::string> names;
    for (Eigen::Index p = 0; p < data.X.cols(); ++p) {
      names.push_back("beta" + std::to_string(p + 1));
    }
    return names;
  }
  void validate(const Dataset& data) const override {
    if (data.n() < 2) {
      throw std::invalid_argument("poisson model needs at least two observations");
    }
    if (!data.has_design() || data.X.rows() != data.n()) {
      throw std::invalid_argument("poisson model needs a design matrix with one row per count");
    }
    if (data.offset.size() != 0 && data.offset.size() != data.n()) {
      throw std::invalid_argument("offset length does not match the number of counts");
    }
    detail::require_finite(data);
    for (const double y : data.y) {
      if (y < 0.0 || y != std::floor(y)) {
        throw std::invalid_argument("poisson counts must be nonnegative integers");
      }
    }
  }

  [[nodiscard]] double log_lik_point(const Eigen::VectorXd& beta, const Dataset& data,
                                     Eigen::Index i) const override {
    double eta = data.X.row(i).dot(beta) + (data.offset.size() == data.n() ? data.offset[i] : 0.0);
    eta = std::clamp(eta, -kLinearPredictorClamp, kLinearPredictorClamp);
    return data.y[i] * eta - std::exp(eta) - std::lgamma(data.y[i] + 1.0);
  }
  [[nodiscard]] double log_prior(const Eigen::VectorXd& /*beta*/) const override { return 0.0; }

  [[nodiscard]] double log_joint_unconstrained(const Eigen::VectorXd& beta,
                                               const Dataset& data) const override {
    return poisson_glm_logjoint(beta, data).value;
  }

  [[nodiscard]] Eigen::VectorXd log_joint_rows(const DrawMatrix& draws,
                                               const Dataset& data) const override {
    Eigen::MatrixXd eta = draws * data.X.transpose();
    eta.rowwise() += data.offset_or_zero().transpose();
    eta = eta.cwiseMax(-kLinearPredictorClamp).cwiseMin(kLinearPredictorClamp);
    double log_fact = 0.0;
    for (const double y : data.y) {
      log_fact += std::lgamma(y + 1.0);
    }
    return (eta * data.y - eta.array().exp().rowwise().sum().matrix()).array() - log_fact;
  }

  [[nodiscard]] Eigen::VectorXd log_lik_rows(const DrawMatrix& draws, const Dataset& data,
                                             Eigen::Index i) const override {
    const double off = data.offset.size() == data.n() ? data.offset[i] : 0.0;
    const Eigen::VectorXd eta = ((draws * data.X.row(i).transpose()).array() + off)
                                    .cwiseMax(-kLinearPredictorClamp)
                                    .cwiseMin(kLinearPredictorClamp);
    return (data.y[i] * eta.array() - eta.array().exp()) - std::lgamma(data.y[i] + 1.0);
  }

  /// Posterior mode by damped Newton iterations from a log-mean intercept.
  [[nodiscard]] Eigen::VectorXd initial_point(const Dataset& data) const override {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(data.X.cols());
    // least-squares start on log(y + 0.5) - offset
    const Eigen::VectorXd z = (data.y.array() + 0.5).log().matrix() - data.offset_or_zero();
    beta = data.X.colPivHouseholderQr().solve(z);
    double current = poisson_glm_logjoint(beta, data).value;
    for (int it = 0; it < 100; ++it) {
      const Eigen::VectorXd grad = poisson_glm_gradient(beta, data);
      const Eigen::MatrixXd neg_hess = -poisson_glm_hessian(beta, data);
      const Eigen::VectorXd step = neg_hess.ldlt().solve(grad);
      double t = 1.0;
      bool improved = false;
      for (int half = 0; half < 40; ++half, t *= 0.5) {
        const Eigen::VectorXd candidate = beta + t * step;
        const double value = poisson_glm_logjoint(candidate, data).value;
        if (value >= current) {
          beta = candidate;
          improved = value - current > 1e-12;
          current = value;
          break;
        }
      }
      if (!improved || step.norm() < 1e-10) {
        break;
      }
    }
    return beta;
  }

  /// Inverse of the negative Hessian at `at`.
  [[nodiscard]] Eigen::MatrixXd proposal_covariance(const Dataset& data,
                                                    const Eigen::VectorXd& at) const override {
    const Eigen::MatrixXd neg_hess = -poisson_glm_hessian(at, data);
    const Eigen::Index P = neg_hess.rows();
    return neg_hess.ldlt().solve(Eigen::MatrixXd::Identity(P, P));
  }
};

// -- random-walk Metropolis -------------------------------------------------------------------

struct RwmConfig {
  int chains = 4;
  double target_accept = 0.234;
  /// Starting point; the model's initial_point when absent.
  std::optional<Eigen::VectorXd> init;
};

/// Adaptive-scale random-walk Metropolis on the model's unconstrained log joint.
/**
 * Runs `cfg.chains` chains and concatenates their post-warmup draws into S rows. Each chain
 * warms up for as many iterations as it keeps. During warmup the proposal scale is tuned
 * towards the target acceptance rate and the proposal shape is re-estimated once from the
 * middle of warmup. Throws SamplerFailure when a chain accepts nothing after warmup.
 */
inline DrawMatrix rw_metropolis(const Model& model, const Dataset& data, Eigen::Index S,
                                std::uint64_t seed, const RwmConfig& cfg = {}) {
  model.validate(data);
  if (S < 1 || cfg.chains < 1) {
    throw std::invalid_argument("rw_metropolis: need at least one draw and one chain");
  }
  const Eigen::Index D = model.dim(data);
  const Eigen::VectorXd start = cfg.init ? *cfg.init : model.initial_point(data);
  if (start.size() != D) {
    throw std::invalid_argument("rw_metropolis: initial point has the wrong dimension");
  }
  const double start_lp = model.log_joint_unconstrained(start, data);
  if (!std::isfinite(start_lp)) {
    throw SamplerFailure("log joint is not finite at the initial point");
  }
  Eigen::MatrixXd base_factor;
  try {
    base_factor = jittered_cholesky(model.proposal_covariance(data, start));
  } catch (const TransformUnavailable&) {
    base_factor = Eigen::MatrixXd::Identity(D, D);
  }
  const double default_log_scale = std::log(2.38 / std::sqrt(static_cast<double>(D)));

  DrawMatrix out(S, D);
  Eigen::Index row = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    const Eigen::Index keep = S / cfg.chains + (c < S % cfg.chains ? 1 : 0);
    if (keep == 0) {
      continue;
    }
    const Eigen::Index warmup = keep;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd factor = base_factor;
    double log_scale = default_log_scale;

    Eigen::VectorXd x = start + 0.5 * factor * standard_normal_vector(D, rng);
    double lp = model.log_joint_unconstrained(x, data);
    if (!std::isfinite(lp)) {
      x = start;
      lp = start_lp;
    }
    DrawMatrix warm(warmup, D);
    Eigen::Index accepted = 0;
    Eigen::Index adapt_t = 0;
    for (Eigen::Index t = 0; t < warmup + keep; ++t) {
      const Eigen::VectorXd prop = x + std::exp(log_scale) * factor * standard_normal_vector(D, rng);
      const double lp_prop = model.log_joint_unconstrained(prop, data);
      const double log_alpha = std::isnan(lp_prop) ? kNegInf : lp_prop - lp;
      const bool accept = std::log(unif(rng)) < log_alpha;
      if (accept) {
        x = prop;
        lp = lp_prop;
      }
      if (t < warmup) {
        warm.row(t) = x.transpose();
        const double a = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
        ++adapt_t;
        log_scale += (a - cfg.target_accept) / std::pow(static_cast<double>(adapt_t), 0.6);
        if (t + 1 == warmup / 2 && warmup / 4 > 2 * D + 2) {
          const Eigen::Index from = warmup / 4;
          const DrawMatrix window = warm.middleRows(from, t + 1 - from);
          try {
            factor = jittered_cholesky(sample_covariance(window));
            log_scale = default_log_scale;
            adapt_t = 0;
          } catch (const TransformUnavailable&) {
            // keep the current shape
          }
        }
      } else {
        out.row(row++) = x.transpose();
        accepted += accept ? 1 : 0;
      }
    }
    if (accepted == 0) {
      throw SamplerFailure("random-walk Metropolis accepted no proposals after warmup");
    }
  }
  return out;
}

/// Exact posterior draws when the model has a conjugate sampler, random-walk Metropolis
/// otherwise.
inline DrawMatrix sample_posterior(const Model& model, const Dataset& data, Eigen::Index S,
                                   std::uint64_t seed, const RwmConfig& cfg = {}) {
  if (auto exact = model.exact_posterior(data, S, seed)) {
    return *std::move(exact);
  }
  return rw_metropolis(model, data, S, seed, cfg);
}

}  // namespace iwmm

#endif  // IWMM_BAYES_MODELS_HPP
