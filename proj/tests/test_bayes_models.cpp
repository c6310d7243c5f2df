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

#include <iwmm/bayes_models.hpp>
#include <iwmm/random.hpp>
#include <iwmm/synthetic.hpp>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

namespace {

using iwmm::Dataset;
using iwmm::DrawMatrix;

Dataset normal_data(Eigen::Index n, std::uint64_t seed) {
  iwmm::Rng rng(seed);
  Dataset d;
  d.y = iwmm::standard_normal_vector(n, rng);
  return d;
}

Dataset count_data() {
  iwmm::CountDataConfig cfg;
  cfg.n = 60;
  cfg.n_outliers = 0;
  return iwmm::simulate_count_data(17, cfg);
}

TEST(BayesModels, PoissonLogJointTrivialValues) {
  Dataset d;
  d.y = Eigen::VectorXd::Zero(5);
  d.X = Eigen::MatrixXd::Ones(5, 2);
  EXPECT_DOUBLE_EQ(iwmm::poisson_glm_logjoint(Eigen::VectorXd::Zero(2), d).value, -5.0);
  Dataset one;
  one.y = Eigen::VectorXd::Ones(1);
  one.X = Eigen::MatrixXd::Ones(1, 1);
  EXPECT_DOUBLE_EQ(iwmm::poisson_glm_logjoint(Eigen::VectorXd::Zero(1), one).value, -1.0);
}

TEST(BayesModels, PoissonClampIsFlagged) {
  Dataset d;
  d.y = Eigen::VectorXd::Ones(2);
  d.X = Eigen::MatrixXd::Ones(2, 1);
  const auto lj = iwmm::poisson_glm_logjoint(Eigen::VectorXd::Constant(1, 900.0), d);
  EXPECT_TRUE(lj.clamped);
  EXPECT_TRUE(std::isfinite(lj.value));
  EXPECT_FALSE(iwmm::poisson_glm_logjoint(Eigen::VectorXd::Zero(1), d).clamped);
}

TEST(BayesModels, PoissonGradientMatchesFiniteDifferences) {
  const Dataset d = count_data();
  iwmm::Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd beta = 0.3 * iwmm::standard_normal_vector(4, rng);
    const Eigen::VectorXd grad = iwmm::poisson_glm_gradient(beta, d);
    Eigen::VectorXd fd(4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(beta[j]));
      Eigen::VectorXd up = beta;
      Eigen::VectorXd down = beta;
      up[j] += h;
      down[j] -= h;
      fd[j] = (iwmm::poisson_glm_logjoint(up, d).value -
               iwmm::poisson_glm_logjoint(down, d).value) / (2.0 * h);
    }
    EXPECT_LT((grad - fd).norm() / grad.norm(), 1e-6);
  }
}

TEST(BayesModels, LikelihoodFactorizes) {
  const Dataset d = count_data();
  const iwmm::PoissonGlmModel pois;
  const iwmm::GaussianModel gauss;
  const Dataset g = normal_data(12, 4);
  const Eigen::VectorXd beta = pois.initial_point(d);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    ll += pois.log_lik_point(beta, d, i);
  }
  EXPECT_NEAR(pois.log_joint_unconstrained(beta, d) - ll, pois.log_prior(beta), 1e-9);
  const Eigen::Vector2d u(0.3, -0.2);
  double llg = 0.0;
  for (Eigen::Index i = 0; i < g.n(); ++i) {
    llg += gauss.log_lik_point(u, g, i);
  }
  EXPECT_NEAR(gauss.log_joint_unconstrained(u, g) - llg, gauss.log_prior(u), 1e-12);
  const DrawMatrix rows = u.transpose();
  EXPECT_NEAR(gauss.log_joint_rows(rows, g)[0], gauss.log_joint_unconstrained(u, g), 1e-10);
  EXPECT_NEAR(pois.log_joint_rows(beta.transpose(), d)[0], pois.log_joint_unconstrained(beta, d),
              1e-8);
}

TEST(BayesModels, ConstrainRoundTrip) {
  const iwmm::GaussianModel m;
  iwmm::Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd u = 2.0 * iwmm::standard_normal_vector(2, rng);
    EXPECT_LT((m.unconstrain(m.constrain(u)) - u).cwiseAbs().maxCoeff(), 1e-12);
  }
  const Dataset g = normal_data(8, 1);
  const Eigen::Vector2d u(0.1, 0.4);
  EXPECT_NEAR(m.log_joint_constrained(m.constrain(u), g), m.log_joint_unconstrained(u, g) - 0.4,
              1e-12);
}

TEST(BayesModels, DatasetWithout) {
  Dataset d = count_data();
  const Dataset r = d.without(4);
  EXPECT_EQ(r.n(), d.n() - 1);
  EXPECT_EQ(r.y[4], d.y[5]);
  EXPECT_EQ(r.X.row(3), d.X.row(3));
  EXPECT_EQ(r.offset[4], d.offset[5]);
  EXPECT_THROW(d.without(d.n()), std::out_of_range);
}

TEST(BayesModels, PoissonRejectsBadCounts) {
  Dataset d = count_data();
  d.y[0] = 1.5;
  EXPECT_THROW(iwmm::PoissonGlmModel().validate(d), std::invalid_argument);
  d.y[0] = -1.0;
  EXPECT_THROW(iwmm::PoissonGlmModel().validate(d), std::invalid_argument);
}

TEST(BayesModels, ExactGaussianPosteriorConcentrates) {
  const Dataset d = normal_data(100000, 6);
  const DrawMatrix draws = iwmm::gaussian_exact_posterior(d, 10000, 7);
  EXPECT_NEAR(draws.col(0).mean(), d.y.mean(), 0.02);
  EXPECT_EQ(draws, iwmm::gaussian_exact_posterior(d, 10000, 7));
}

TEST(BayesModels, ExactGaussianPosteriorErrors) {
  Dataset d;
  d.y = Eigen::VectorXd::Constant(5, 2.0);
  EXPECT_THROW(iwmm::gaussian_exact_posterior(d, 10, 1), iwmm::DegenerateSampleError);
  d.y = Eigen::Vector2d(1.0, 2.0);
  EXPECT_THROW(iwmm::gaussian_exact_posterior(d, 10, 1), std::invalid_argument);
}

TEST(BayesModels, ExactSamplerMonteCarloRate) {
  const Dataset d = normal_data(20, 8);
  auto rmse = [&](Eigen::Index S) {
    double acc = 0.0;
    for (std::uint64_t r = 0; r < 200; ++r) {
      const double e = iwmm::gaussian_exact_posterior(d, S, 1000 + r).col(0).mean() - d.y.mean();
      acc += e * e;
    }
    return std::sqrt(acc / 200.0);
  };
  const double ratio = rmse(50) / rmse(5000);
  EXPECT_GT(ratio, 7.0);
  EXPECT_LT(ratio, 14.0);
}

TEST(BayesModels, AnalyticLooCenteredAndSymmetric) {
  Dataset d = normal_data(10, 9);
  const Dataset rest = d.without(9);
  d.y[9] = rest.y.mean();
  const double m = static_cast<double>(rest.n());
  const double sd = std::sqrt((rest.y.array() - rest.y.mean()).square().sum() / (m - 1.0));
  const double nu = m - 1.0;
  const double scale = std::sqrt(1.0 + 1.0 / m) * sd;
  const double mode = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                      0.5 * std::log(nu * std::numbers::pi) - std::log(scale);
  EXPECT_NEAR(iwmm::gaussian_analytic_loo_lpd(d, 9), mode, 1e-12);
  d.y[9] = rest.y.mean() + 2.5;
  const double a = iwmm::gaussian_analytic_loo_lpd(d, 9);
  d.y[9] = rest.y.mean() - 2.5;
  EXPECT_NEAR(iwmm::gaussian_analytic_loo_lpd(d, 9), a, 1e-12);
}

TEST(BayesModels, AnalyticLooMatchesQuadrature) {
  // p(y_i | y_-i) = integral over sigma^2 of Normal(y_i; ybar, sigma^2 (1 + 1/m)) times the
  // scaled inverse chi-square(m - 1, s^2) posterior of sigma^2.
  Dataset d = normal_data(15, 10);
  d.y[14] = 6.0;
  const Dataset rest = d.without(14);
  const double m = static_cast<double>(rest.n());
  const double ybar = rest.y.mean();
  const double s2 = (rest.y.array() - ybar).square().sum() / (m - 1.0);
  const boost::math::chi_squared chi(m - 1.0);
  auto integrand = [&](double x) {
    // sigma^2 = (m - 1) s^2 / x with x ~ chi^2(m - 1)
    const double sigma2 = (m - 1.0) * s2 / x;
    const double var = sigma2 * (1.0 + 1.0 / m);
    const double z = d.y[14] - ybar;
    return boost::math::pdf(chi, x) * std::exp(-0.5 * z * z / var) /
           std::sqrt(2.0 * std::numbers::pi * var);
  };
  const double p = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, 0.0, std::numeric_limits<double>::infinity(), 15, 1e-13);
  EXPECT_NEAR(iwmm::gaussian_analytic_loo_lpd(d, 14), std::log(p), 1e-8);
}

TEST(BayesModels, RwmStandardNormal) {
  // flat prior, known sigma = sqrt(2), y = (-1, 1): posterior of mu is N(0, 1)
  const iwmm::KnownVarianceGaussianModel m(std::sqrt(2.0));
  Dataset d;
  d.y = Eigen::Vector2d(-1.0, 1.0);
  const DrawMatrix draws = iwmm::rw_metropolis(m, d, 100000, 11);
  ASSERT_EQ(draws.rows(), 100000);
  const double mean = draws.col(0).mean();
  const double var = (draws.col(0).array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.05);
  EXPECT_EQ(draws, iwmm::rw_metropolis(m, d, 100000, 11));
}

TEST(BayesModels, RwmPoissonMatchesGridPosterior) {
  const Dataset d = count_data();
  const iwmm::PoissonGlmModel m;
  const Eigen::VectorXd mode = m.initial_point(d);
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(m.proposal_covariance(d, mode)).matrixL();

  // grid posterior in whitened coordinates beta = mode + L z, z on [-6, 6]^4
  constexpr int kNodes = 25;
  const double step = 12.0 / (kNodes - 1);
  std::vector<double> logw;
  std::vector<Eigen::VectorXd> pts;
  logw.reserve(kNodes * kNodes * kNodes * kNodes);
  pts.reserve(logw.capacity());
  Eigen::VectorXd z(4);
  for (int a = 0; a < kNodes; ++a) {
    for (int b = 0; b < kNodes; ++b) {
      for (int c = 0; c < kNodes; ++c) {
        for (int e = 0; e < kNodes; ++e) {
          z << -6.0 + a * step, -6.0 + b * step, -6.0 + c * step, -6.0 + e * step;
          pts.push_back(mode + L * z);
          logw.push_back(iwmm::poisson_glm_logjoint(pts.back(), d).value);
        }
      }
    }
  }
  const double lse = iwmm::log_sum_exp(logw);
  Eigen::VectorXd grid_mean = Eigen::VectorXd::Zero(4);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    grid_mean += std::exp(logw[k] - lse) * pts[k];
  }

  const Eigen::Index S = 20000;
  const DrawMatrix draws = iwmm::rw_metropolis(m, d, S, 12);
  // batch-means standard error, 80 batches that never straddle chains
  const Eigen::Index batch = 250;
  const Eigen::Index nb = S / batch;
  Eigen::MatrixXd means(nb, 4);
  for (Eigen::Index b = 0; b < nb; ++b) {
    means.row(b) = draws.middleRows(b * batch, batch).colwise().mean();
  }
  const Eigen::RowVectorXd mc_mean = means.colwise().mean();
  const Eigen::RowVectorXd se =
      ((means.rowwise() - mc_mean).array().square().colwise().sum() / (nb - 1.0)).sqrt() /
      std::sqrt(static_cast<double>(nb));
  for (Eigen::Index j = 0; j < 4; ++j) {
    EXPECT_LT(std::abs(mc_mean[j] - grid_mean[j]), 3.0 * se[j]) << "coefficient " << j;
  }
}

TEST(BayesModels, SamplePosteriorPrefersExactSampler) {
  const Dataset d = normal_data(10, 13);
  const iwmm::GaussianModel m;
  EXPECT_EQ(iwmm::sample_posterior(m, d, 100, 14, {}), iwmm::gaussian_exact_posterior(d, 100, 14));
}

}  // namespace
