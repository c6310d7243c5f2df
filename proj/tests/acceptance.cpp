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

/// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <iwmm/iwmm.hpp>

#include <CLI11.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace {

using iwmm::DrawMatrix;
using iwmm::LogWeightVector;
using Clock = std::chrono::steady_clock;

unsigned g_threads = 0;
int g_failed = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) {
    ++g_failed;
  }
}

double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

double max_rel(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  return ((got - want).array().abs() / want.array().abs().max(1e-300)).maxCoeff();
}

// Moment-matching exactness.
void criterion_1() {
  const auto t0 = Clock::now();
  iwmm::Rng rng(101);
  const DrawMatrix x = iwmm::standard_normal_matrix(1000, 5, rng) * 1.7;
  const LogWeightVector w(iwmm::standard_normal_vector(1000, rng));
  const Eigen::VectorXd wmean = iwmm::weighted_mean(x, w);

  double mean_err = 0.0;
  for (int level = 1; level <= 3; ++level) {
    const DrawMatrix y = iwmm::build_transform(level, x, w).apply(x);
    mean_err = std::max(mean_err, (iwmm::sample_mean(y) - wmean).lpNorm<Eigen::Infinity>());
  }
  const DrawMatrix y2 = iwmm::build_transform(2, x, w).apply(x);
  const double var_err =
      max_rel(iwmm::sample_marginal_variance(y2), iwmm::weighted_marginal_variance(x, w));
  const DrawMatrix y3 = iwmm::build_transform(3, x, w).apply(x);
  const double cov_err = max_rel(iwmm::sample_covariance(y3), iwmm::weighted_covariance(x, w));
  const double secs = seconds_since(t0);

  std::ostringstream d;
  d << "mean err " << mean_err << ", T2 var rel err " << var_err << ", T3 cov rel err " << cov_err
    << ", " << secs << " s";
  report(1, mean_err <= 1e-10 && var_err <= 1e-8 && cov_err <= 1e-8 && secs < 1.0, d.str());
}

Eigen::MatrixXd random_factor(Eigen::Index D, iwmm::Rng& rng) {
  std::uniform_real_distribution<double> diag(0.5, 2.0);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(D, D);
  const Eigen::MatrixXd z = iwmm::standard_normal_matrix(D, D, rng);
  for (Eigen::Index i = 0; i < D; ++i) {
    L(i, i) = diag(rng);
    for (Eigen::Index j = 0; j < i; ++j) {
      L(i, j) = 0.3 * z(i, j);
    }
  }
  return L;
}

// Transform round trip and log-determinant.
void criterion_2() {
  iwmm::Rng rng(202);
  std::uniform_int_distribution<int> dim(1, 10);
  std::uniform_int_distribution<int> len(1, 5);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> scale(0.3, 3.0);
  double trip_err = 0.0;
  double det_err = 0.0;
  for (int c = 0; c < 100; ++c) {
    const Eigen::Index D = dim(rng);
    iwmm::TransformChain chain;
    Eigen::MatrixXd composite = Eigen::MatrixXd::Identity(D, D);
    const int n = len(rng);
    for (int m = 0; m < n; ++m) {
      const Eigen::VectorXd a = iwmm::standard_normal_vector(D, rng);
      const Eigen::VectorXd b = iwmm::standard_normal_vector(D, rng);
      iwmm::AffineMap map = iwmm::AffineMap::translation_about(a, b);
      if (const int k = kind(rng); k == 1) {
        Eigen::VectorXd s(D);
        for (auto& v : s) {
          v = scale(rng);
        }
        map = iwmm::AffineMap::diagonal_about(s, a, b);
      } else if (k == 2) {
        map = iwmm::AffineMap::full(random_factor(D, rng), random_factor(D, rng), a, b);
      }
      composite = map.linear() * composite;
      chain.push_back(map);
    }
    const DrawMatrix x = iwmm::standard_normal_matrix(50, D, rng) * 2.0;
    const DrawMatrix back = iwmm::apply(iwmm::invert(chain), iwmm::apply(chain, x));
    trip_err = std::max(trip_err, (back - x).lpNorm<Eigen::Infinity>());
    const double brute = std::log(std::abs(composite.fullPivLu().determinant()));
    det_err = std::max(det_err, std::abs(chain.total_log_det() - brute));
    det_err = std::max(det_err, std::abs(iwmm::invert(chain).total_log_det() + brute));
  }
  std::ostringstream d;
  d << "max round-trip err " << trip_err << ", max log det err " << det_err;
  report(2, trip_err <= 1e-8 && det_err <= 1e-10, d.str());
}

// Self-normalization invariances.
void criterion_3() {
  iwmm::Rng rng(303);
  bool identical = true;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd lw = iwmm::standard_normal_vector(2000, rng) * 3.0;
    lw = (lw.array() * 0x1p30).round().matrix() * 0x1p-30;
    const Eigen::VectorXd h = iwmm::standard_normal_vector(2000, rng);
    const double base = iwmm::snis_estimate(LogWeightVector(lw), h);
    for (const double c : {-1e5, -745.25, -1.0, 0.5, 37.0, 709.75, 1e6}) {
      const Eigen::VectorXd shifted = lw.array() + c;
      identical = identical && iwmm::snis_estimate(LogWeightVector(shifted), h) == base;
    }
  }

  double loo_err = 0.0;
  bool same_methods = true;
  const auto check = [&](const iwmm::Model& model, const iwmm::Dataset& data,
                         const DrawMatrix& draws) {
    const Eigen::VectorXd lp = model.log_joint_rows(draws, data);
    iwmm::LooOptions opts;
    opts.seed = 17;
    opts.threads = g_threads;
    const auto a = iwmm::mm_loo(model, data, draws, lp, opts);
    for (const double c : {-1e4, 12.345, 3e3}) {
      const Eigen::VectorXd lpc = lp.array() + c;
      const auto b = iwmm::mm_loo(model, data, draws, lpc, opts);
      for (std::size_t i = 0; i < a.folds.size(); ++i) {
        loo_err = std::max(loo_err, std::abs(a.folds[i].elpd - b.folds[i].elpd));
        same_methods = same_methods && a.folds[i].method == b.folds[i].method;
      }
    }
  };
  const iwmm::GaussianModel gauss;
  const iwmm::Dataset gdata = iwmm::gaussian_outlier_data(20260101, 20.0);
  check(gauss, gdata, iwmm::gaussian_exact_posterior(gdata, 4000, 5));
  const iwmm::PoissonGlmModel pois;
  const iwmm::Dataset pdata = iwmm::simulate_count_data(1);
  check(pois, pdata, iwmm::sample_posterior(pois, pdata, 2000, 6));

  std::ostringstream d;
  d << "SNIS bit-identical under exact shifts: " << (identical ? "yes" : "no")
    << ", max LOO elpd change " << loo_err << ", fold methods unchanged: "
    << (same_methods ? "yes" : "no");
  report(3, identical && loo_err <= 1e-9 && same_methods, d.str());
}

// GPD shape recovery.
void criterion_4() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::ostringstream d;
  for (const double k : {0.1, 0.5, 0.9, 1.5}) {
    double mean = 0.0;
    int close = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      iwmm::Rng rng(iwmm::derive_seed(404, seed));
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      std::vector<double> x(1000);
      for (auto& v : x) {
        v = iwmm::gpd_quantile(unif(rng), k, 1.0);
      }
      const double khat = iwmm::fit_gpd(x).k;
      mean += khat / 100.0;
      close += std::abs(khat - k) <= 0.2 ? 1 : 0;
    }
    pass = pass && std::abs(mean - k) <= 0.1 && close >= 95;
    d << "k=" << k << ": mean " << mean << ", within 0.2 " << close << "/100; ";
  }
  const double secs = seconds_since(t0);
  d << secs << " s";
  report(4, pass && secs < 10.0, d.str());
}

// Discrete oracle for SNIS and balance-heuristic MIS.
void criterion_5() {
  const std::array<double, 6> atoms{-2.0, -0.5, 0.0, 1.0, 2.5, 4.0};
  const std::array<double, 6> p_un{1.0, 3.0, 2.0, 4.0, 1.5, 0.5};
  const std::array<double, 6> g1{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  const std::array<double, 6> g2{0.5, 0.5, 1.0, 2.0, 3.0, 3.0};
  const auto h = [](double x) { return x * x + std::sin(x); };
  const auto norm = [](const std::array<double, 6>& a) {
    std::array<double, 6> out{};
    double s = 0.0;
    for (double v : a) {
      s += v;
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      out[j] = a[j] / s;
    }
    return out;
  };
  const auto p = norm(p_un);
  const auto q1 = norm(g1);
  const auto q2 = norm(g2);
  double exact = 0.0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    exact += p[j] * h(atoms[j]);
  }

  constexpr Eigen::Index S = 100000;
  int snis_ok = 0;
  int mis_ok = 0;
  double worst_z = 0.0;
  std::array<double, 2> sum_est{};
  std::array<double, 2> sum_var{};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    iwmm::Rng rng(iwmm::derive_seed(505, seed));
    std::discrete_distribution<int> d1(q1.begin(), q1.end());
    std::discrete_distribution<int> d2(q2.begin(), q2.end());

    Eigen::VectorXd lp(S);
    Eigen::VectorXd lg(S);
    Eigen::VectorXd hv(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      const auto j = static_cast<std::size_t>(d1(rng));
      lp[s] = std::log(p_un[j]);
      lg[s] = std::log(q1[j]);
      hv[s] = h(atoms[j]);
    }
    const LogWeightVector w = iwmm::common_log_weights(lp, lg);
    const double snis = iwmm::snis_estimate(w, hv);
    const Eigen::VectorXd wn = w.self_normalized_abs();
    const double se_snis =
        std::sqrt((wn.array().square() * (hv.array() - snis).square()).sum());

    Eigen::VectorXd mp(S);
    Eigen::VectorXd m1(S);
    Eigen::VectorXd m2(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      const auto j = static_cast<std::size_t>(s < S / 2 ? d1(rng) : d2(rng));
      mp[s] = std::log(p[j]);
      m1[s] = std::log(q1[j]);
      m2[s] = std::log(q2[j]);
      hv[s] = h(atoms[j]);
    }
    const std::array<Eigen::VectorXd, 2> comps{m1, m2};
    const std::array<double, 2> alphas{0.5, 0.5};
    const LogWeightVector wm = iwmm::balance_heuristic_log_weights(mp, comps, alphas, true);
    const double mis = iwmm::is_estimate(wm, hv);
    Eigen::VectorXd wh(S);
    for (Eigen::Index s = 0; s < S; ++s) {
      wh[s] = std::exp(wm.log_mag[s]) * hv[s];
    }
    const double se_mis =
        std::sqrt((wh.array() - wh.mean()).square().sum() / static_cast<double>(S - 1)) /
        std::sqrt(static_cast<double>(S));

    const double z1 = std::abs(snis - exact) / se_snis;
    const double z2 = std::abs(mis - exact) / se_mis;
    worst_z = std::max({worst_z, z1, z2});
    sum_est[0] += snis;
    sum_est[1] += mis;
    sum_var[0] += se_snis * se_snis;
    sum_var[1] += se_mis * se_mis;
    snis_ok += z1 <= 3.0 ? 1 : 0;
    mis_ok += z2 <= 3.0 ? 1 : 0;
  }
  const double z_snis = std::abs(sum_est[0] / 20.0 - exact) / (std::sqrt(sum_var[0]) / 20.0);
  const double z_mis = std::abs(sum_est[1] / 20.0 - exact) / (std::sqrt(sum_var[1]) / 20.0);
  std::ostringstream d;
  d << "exact " << exact << "; 20-seed mean |z|: SNIS " << z_snis << ", MIS " << z_mis
    << "; single seeds within 3 SE: SNIS " << snis_ok << "/20, MIS " << mis_ok
    << "/20, worst |z| " << worst_z;
  report(5, z_snis <= 3.0 && z_mis <= 3.0, d.str());
}

// Gaussian single-outlier sweep.
void criterion_6() {
  const auto t0 = Clock::now();
  const std::vector<double> grid{0.0, 4.0, 8.0, 12.0, 16.0, 20.0};
  constexpr int kSeeds = 50;
  iwmm::OutlierExperimentConfig cfg;
  cfg.methods = {"naive", "psis", "psis_mm"};
  std::vector<std::vector<iwmm::OutlierMethodResult>> runs(grid.size() * kSeeds);
  iwmm::parallel_for(runs.size(), g_threads, [&](std::size_t t) {
    runs[t] = iwmm::run_outlier_experiment(grid[t / kSeeds], iwmm::derive_seed(1, t % kSeeds),
                                           cfg);
  });
  const double secs = seconds_since(t0);

  struct Stats {
    double abs_err = 0.0;
    double signed_err = 0.0;
    int khat_high = 0;
  };
  std::map<std::pair<std::size_t, std::string>, Stats> st;
  for (std::size_t t = 0; t < runs.size(); ++t) {
    for (const auto& r : runs[t]) {
      auto& s = st[{t / kSeeds, r.method}];
      s.abs_err += std::abs(r.elpd - r.analytic) / kSeeds;
      s.signed_err += (r.elpd - r.analytic) / kSeeds;
      s.khat_high += r.khat > 0.7 || std::isnan(r.khat) ? 1 : 0;
    }
  }

  std::ostringstream d;
  bool a = true;
  d << "psis_mm mean |err|:";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double e = st[{g, "psis_mm"}].abs_err;
    a = a && e <= 1.0;
    d << ' ' << grid[g] << ':' << e;
  }
  const std::size_t last = grid.size() - 1;
  const double psis20 = st[{last, "psis"}].abs_err;
  const double mm20 = st[{last, "psis_mm"}].abs_err;
  const bool b = psis20 >= 5.0 * mm20;
  d << "; (a) " << (a ? "ok" : "no") << "; (b) psis " << psis20 << " vs mm " << mm20 << ' '
    << (b ? "ok" : "no");
  bool c = true;
  d << "; (c)";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] < 12.0) {
      continue;
    }
    const int mm_low = kSeeds - st[{g, "psis_mm"}].khat_high;
    const int psis_high = st[{g, "psis"}].khat_high;
    c = c && mm_low >= 45 && psis_high >= 45;
    d << " y=" << grid[g] << " mm khat<0.7 " << mm_low << "/50, psis khat>0.7 " << psis_high
      << "/50;";
  }
  d << (c ? " ok" : " no");
  const double naive20 = st[{last, "naive"}].signed_err;
  const bool dd = naive20 < 0.0;
  d << "; (d) naive mean signed err " << naive20 << ' ' << (dd ? "ok" : "no") << "; " << secs
    << " s";
  report(6, a && b && c && dd && secs < 300.0, d.str());
}

// Split-proposal components by quadrature.
void criterion_7() {
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double inf = std::numeric_limits<double>::infinity();
  double worst = 0.0;
  struct Case {
    double mu, sd, y, tau;
  };
  for (const Case k : {Case{0.0, 1.0, 0.5, 1.0}, Case{0.3, 0.4, 3.0, 1.0},
                       Case{-1.0, 2.0, 8.0, 0.5}, Case{0.1, 0.18, 20.0, 1.0}}) {
    const auto p = [&](double t) { return std::exp(normal_log_pdf(t, k.mu, k.sd)); };
    const auto h = [&](double t) { return std::exp(normal_log_pdf(k.y, t, k.tau)); };
    const double exact = std::exp(normal_log_pdf(k.y, k.mu, std::hypot(k.sd, k.tau)));
    const double first = Quad::integrate([&](double t) { return std::abs(h(t)) * p(t); }, -inf,
                                         inf, 15, 1e-14);
    const double second =
        Quad::integrate([&](double t) { return exact * p(t); }, -inf, inf, 15, 1e-14);
    worst = std::max({worst, std::abs(first / exact - 1.0), std::abs(second / exact - 1.0)});
  }
  std::ostringstream d;
  d << "max relative deviation " << worst;
  report(7, worst <= 1e-6, d.str());
}

struct PoissonRuns {
  int psis_bad_2000 = 0;
  std::vector<iwmm::LooResult> smoothed;
  std::vector<iwmm::LooResult> raw;
};

PoissonRuns poisson_runs() {
  PoissonRuns pr;
  const iwmm::PoissonGlmModel model;
  const iwmm::Dataset data = iwmm::simulate_count_data(1);
  {
    const DrawMatrix draws = iwmm::sample_posterior(model, data, 2000, iwmm::derive_seed(1, 1));
    iwmm::LooOptions opts;
    opts.threads = g_threads;
    pr.psis_bad_2000 =
        iwmm::psis_loo(model, data, draws, model.log_joint_rows(draws, data), opts).n_bad;
  }
  pr.smoothed.resize(20);
  pr.raw.resize(20);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const DrawMatrix draws =
        iwmm::sample_posterior(model, data, 4000, iwmm::derive_seed(808, seed));
    const Eigen::VectorXd lp = model.log_joint_rows(draws, data);
    iwmm::LooOptions opts;
    opts.seed = iwmm::derive_seed(809, seed);
    opts.threads = g_threads;
    pr.smoothed[seed] = iwmm::mm_loo(model, data, draws, lp, opts);
    opts.smoothing = false;
    pr.raw[seed] = iwmm::mm_loo(model, data, draws, lp, opts);
  }
  return pr;
}

// Poisson GLM LOO.
void criterion_8(const PoissonRuns& pr) {
  int zero_bad = 0;
  bool proposal_ok = true;
  std::int64_t adapted = 0;
  std::ostringstream counts;
  for (const auto& r : pr.smoothed) {
    zero_bad += r.n_bad == 0 ? 1 : 0;
    counts << r.n_bad << ' ';
    for (const auto& f : r.folds) {
      if (f.method == iwmm::LooMethod::psis) {
        continue;
      }
      ++adapted;
      proposal_ok = proposal_ok && f.counters.proposal_evals == 4000;
    }
  }
  std::ostringstream d;
  d << "psis bad folds at S=2000: " << pr.psis_bad_2000 << "; mm bad folds per seed: "
    << counts.str() << "(zero in " << zero_bad << "/20); proposal evals = S in all " << adapted
    << " adapted folds: " << (proposal_ok ? "yes" : "no");
  report(8, pr.psis_bad_2000 >= 5 && zero_bad >= 16 && proposal_ok && adapted > 0, d.str());
}

// Cost counters, moment matching against AIS.
void criterion_9(const PoissonRuns& pr) {
  bool mm_ok = true;
  std::map<int, int> by_attempts;
  for (const auto& r : pr.smoothed) {
    for (const auto& f : r.folds) {
      if (f.method == iwmm::LooMethod::psis) {
        continue;
      }
      // initial weights, one pass per attempted transform, the split sample
      mm_ok = mm_ok && f.counters.target_evals == 4000LL * (f.transforms_attempted + 2) &&
              f.counters.proposal_evals == 4000;
      ++by_attempts[f.transforms_attempted];
    }
  }

  iwmm::OutlierExperimentConfig cfg;
  cfg.methods = {"ais_g", "ais_t", "ais_g_x2", "ais_t_x2"};
  std::vector<std::vector<iwmm::OutlierMethodResult>> runs(10);
  iwmm::parallel_for(runs.size(), g_threads, [&](std::size_t t) {
    runs[t] = iwmm::run_outlier_experiment(20.0, iwmm::derive_seed(909, t), cfg);
  });
  bool ais_ok = true;
  std::map<int, int> iters;
  for (const auto& rs : runs) {
    for (const auto& r : rs) {
      const bool dbl = r.method.size() > 3 && r.method.substr(r.method.size() - 3) == "_x2";
      const std::int64_t expect = 4000LL * (r.iterations + (dbl ? 1 : 0));
      ais_ok = ais_ok && r.counters.proposal_evals == expect &&
               r.counters.target_evals == 4000LL * r.iterations;
      ++iters[r.iterations];
    }
  }
  std::ostringstream d;
  d << "IWMM target = S (attempted + 2), proposal = S: " << (mm_ok ? "yes" : "no")
    << " (folds by attempts:";
  for (const auto& [a, n] : by_attempts) {
    d << ' ' << a << 'x' << n;
  }
  d << "); AIS proposal = S iterations (+S pooled for double): " << (ais_ok ? "yes" : "no")
    << " (runs by iterations:";
  for (const auto& [i, n] : iters) {
    d << ' ' << i << 'x' << n;
  }
  d << ')';
  report(9, mm_ok && ais_ok && by_attempts.size() > 1 && iters.size() > 1, d.str());
}

// Smoothing ablation.
void criterion_10(const PoissonRuns& pr) {
  int ordered = 0;
  std::ostringstream counts;
  for (std::size_t s = 0; s < pr.raw.size(); ++s) {
    ordered += pr.raw[s].n_bad >= pr.smoothed[s].n_bad ? 1 : 0;
    counts << pr.raw[s].n_bad << ' ';
  }
  std::ostringstream d;
  d << "unsmoothed bad folds per seed: " << counts.str() << "(>= smoothed in " << ordered
    << "/20)";
  report(10, ordered >= 16, d.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  app.add_option("--threads", g_threads, "Worker threads (0: all cores)");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = Clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  const PoissonRuns pr = poisson_runs();
  criterion_8(pr);
  criterion_9(pr);
  criterion_10(pr);
  std::printf("%d of 10 criteria failed; total %.1f s\n", g_failed, seconds_since(t0));
  return g_failed == 0 ? 0 : 1;
}
