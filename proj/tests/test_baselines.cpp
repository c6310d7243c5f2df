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

#include <iwmm/baselines.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace {

using iwmm::AisOptions;
using iwmm::AisTarget;
using iwmm::DrawMatrix;
using iwmm::ParametricProposal;
using iwmm::ProposalFamily;

ParametricProposal unit_proposal(ProposalFamily family, Eigen::Index D) {
  ParametricProposal q;
  q.family = family;
  q.location = Eigen::VectorXd::Zero(D);
  q.scale_factor = Eigen::MatrixXd::Identity(D, D);
  return q;
}

double density_1d(const ParametricProposal& q, double x) {
  DrawMatrix m(1, 1);
  m(0, 0) = x;
  return std::exp(iwmm::proposal_log_density(q, m)[0]);
}

Eigen::VectorXd normal_log_density(const DrawMatrix& x, double mean) {
  return -0.5 * (x.col(0).array() - mean).square() - 0.5 * std::log(2.0 * M_PI);
}

TEST(Baselines, GaussianDensityAtOrigin) {
  const auto q = unit_proposal(ProposalFamily::gaussian, 1);
  EXPECT_NEAR(std::log(density_1d(q, 0.0)), -0.5 * std::log(2.0 * M_PI), 1e-14);
}

TEST(Baselines, DensitiesIntegrateToOne) {
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto family : {ProposalFamily::gaussian, ProposalFamily::student_t3}) {
    auto q = unit_proposal(family, 1);
    q.location[0] = 0.7;
    q.scale_factor(0, 0) = 1.9;
    const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double x) { return density_1d(q, x); }, -inf, inf, 15, 1e-13);
    EXPECT_NEAR(total, 1.0, 1e-8);
  }
}

TEST(Baselines, StudentTailIsHeavier) {
  const auto g = unit_proposal(ProposalFamily::gaussian, 1);
  const auto t = unit_proposal(ProposalFamily::student_t3, 1);
  const double r10 = density_1d(t, 10.0) / density_1d(g, 10.0);
  const double r20 = density_1d(t, 20.0) / density_1d(g, 20.0);
  EXPECT_GT(r10, 1.0);
  EXPECT_GT(r20, r10);
}

TEST(Baselines, FromSampleMatchesCovariance) {
  iwmm::Rng rng(4);
  const DrawMatrix x = iwmm::standard_normal_matrix(20000, 2, rng) * 2.0;
  const auto q = ParametricProposal::from_sample(ProposalFamily::student_t3, x);
  const Eigen::MatrixXd cov = 3.0 * q.scale_factor * q.scale_factor.transpose();
  EXPECT_TRUE(cov.isApprox(iwmm::sample_covariance(x), 1e-10));
}

TEST(Baselines, AisFindsShiftedTarget) {
  AisTarget target{[](const DrawMatrix& x) { return normal_log_density(x, 5.0); }, {}};
  AisOptions opts;
  opts.seed = 11;
  const auto res = iwmm::ais_run(target, unit_proposal(ProposalFamily::gaussian, 1), opts);
  EXPECT_TRUE(res.converged);
  EXPECT_GT(res.iterations, 1);
  EXPECT_NEAR(res.first.location[0], 5.0, 1.0);
  EXPECT_NEAR(res.estimate, 1.0, 1e-12);
  for (std::size_t t = 1; t < res.history.size(); ++t) {
    EXPECT_GT(res.history[t].location_first[0], res.history[t - 1].location_first[0]);
  }
}

TEST(Baselines, AisStopsAtOnceWhenProposalIsTarget) {
  AisTarget target{[](const DrawMatrix& x) { return normal_log_density(x, 0.0); }, {}};
  AisOptions opts;
  opts.seed = 12;
  const auto res = iwmm::ais_run(target, unit_proposal(ProposalFamily::gaussian, 1), opts);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_LT(res.history[0].khat_first, opts.k_threshold);
  EXPECT_EQ(res.counters.target_evals, opts.draws_per_iter);
  EXPECT_EQ(res.counters.proposal_evals, opts.draws_per_iter);
}

TEST(Baselines, AisIsSeeded) {
  AisTarget target{[](const DrawMatrix& x) { return normal_log_density(x, 3.0); },
                   [](const DrawMatrix& x) { return Eigen::VectorXd(x.col(0).array().abs().log()); }};
  AisOptions opts;
  opts.seed = 13;
  const auto a = iwmm::ais_run(target, unit_proposal(ProposalFamily::student_t3, 1), opts);
  const auto b = iwmm::ais_run(target, unit_proposal(ProposalFamily::student_t3, 1), opts);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Baselines, DoubleAdaptationCountsPooledEvaluations) {
  AisTarget target{[](const DrawMatrix& x) { return normal_log_density(x, 4.0); },
                   [](const DrawMatrix& x) { return Eigen::VectorXd(-x.col(0)); }};
  AisOptions opts;
  opts.seed = 14;
  opts.double_adapt = true;
  opts.draws_per_iter = 2001;
  const auto res = iwmm::ais_run(target, unit_proposal(ProposalFamily::gaussian, 1), opts);
  const auto it = static_cast<Eigen::Index>(res.iterations);
  EXPECT_EQ(res.counters.target_evals, it * 2001);
  EXPECT_EQ(res.counters.function_evals, it * 2001);
  EXPECT_EQ(res.counters.proposal_evals, (it + 1) * 2001);
  EXPECT_GT(res.iterations, 1);
  // E[exp(-x)] under N(4, 1)
  EXPECT_NEAR(res.estimate / std::exp(-3.5), 1.0, 0.1);
}

TEST(Baselines, RejectsBadInputs) {
  AisTarget target{[](const DrawMatrix& x) { return normal_log_density(x, 0.0); }, {}};
  auto q = unit_proposal(ProposalFamily::gaussian, 1);
  AisOptions opts;
  opts.max_iter = 0;
  EXPECT_THROW(iwmm::ais_run(target, q, opts), std::invalid_argument);
  q.scale_factor(0, 0) = 0.0;
  EXPECT_THROW(iwmm::ais_run(target, q, {}), std::invalid_argument);
  EXPECT_THROW(iwmm::ais_run(AisTarget{}, unit_proposal(ProposalFamily::gaussian, 1), {}),
               std::invalid_argument);
}

}  // namespace
