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

/// Command-line front end for the iwmm library.

#include <iwmm/iwmm.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUnreliable = 2;

struct CommonFlags {
  std::uint64_t seed = 1;
  Eigen::Index draws = 4000;
  double k_threshold = iwmm::kDefaultKThreshold;
  bool no_smoothing = false;
  int refit_budget = 0;
  unsigned threads = 0;
  std::string out;
};

/// Output sink: the file named by `path`, or stdout when empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) {
        throw iwmm::InputError("cannot open '" + path + "' for writing");
      }
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw iwmm::InputError("cannot open '" + path + "'");
  }
  return in;
}

void add_seed(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Base random seed")->capture_default_str();
}

void add_draws(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--draws,-S", f.draws, "Number of posterior draws S")
      ->capture_default_str()
      ->check(CLI::Range(Eigen::Index{100}, Eigen::Index{10'000'000}));
}

void add_threshold(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--k-threshold", f.k_threshold, "Pareto khat threshold")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

void add_smoothing(CLI::App* cmd, CommonFlags& f) {
  cmd->add_flag("--no-smoothing", f.no_smoothing, "Disable Pareto smoothing");
}

void add_threads(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--threads", f.threads, "Worker threads (0: all cores)")->capture_default_str();
}

void add_out(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--out,-o", f.out, "Output file (default: stdout)");
}

std::vector<std::vector<iwmm::OutlierMethodResult>> run_grid(
    const std::vector<double>& grid, int seeds, const CommonFlags& f,
    const iwmm::OutlierExperimentConfig& cfg) {
  const std::size_t n_tasks = grid.size() * static_cast<std::size_t>(seeds);
  std::vector<std::vector<iwmm::OutlierMethodResult>> results(n_tasks);
  iwmm::parallel_for(n_tasks, f.threads, [&](std::size_t t) {
    const double y30 = grid[t / static_cast<std::size_t>(seeds)];
    const auto rep = static_cast<std::uint64_t>(t % static_cast<std::size_t>(seeds));
    results[t] = iwmm::run_outlier_experiment(y30, iwmm::derive_seed(f.seed, rep), cfg);
  });
  return results;
}

int cmd_diagnose(const std::string& path, bool log_scale, const CommonFlags& f) {
  auto in = open_input(path);
  const iwmm::LogWeightVector w = iwmm::read_weights_csv(in, log_scale);
  const iwmm::ParetoDiagnostic d = iwmm::fit_gpd_tail(w, f.k_threshold);
  Output out(f.out);
  out.stream() << iwmm::to_json(d, f.k_threshold).dump(2) << '\n';
  return iwmm::is_reliable(d, f.k_threshold) ? kExitOk : kExitUnreliable;
}

int cmd_smooth(const std::string& path, bool log_scale, const CommonFlags& f) {
  auto in = open_input(path);
  const iwmm::LogWeightVector w = iwmm::read_weights_csv(in, log_scale);
  const auto [sw, d] = iwmm::pareto_smooth(w, f.k_threshold);
  Output out(f.out);
  auto& os = out.stream();
  os << (log_scale ? "log_weight" : "weight") << '\n';
  for (Eigen::Index s = 0; s < sw.size(); ++s) {
    const double lm = sw.sign[s] == 0 ? iwmm::kNegInf : sw.log_mag[s];
    os << iwmm::format_number(log_scale ? lm : std::exp(lm)) << '\n';
  }
  std::cerr << iwmm::to_json(d, f.k_threshold).dump() << '\n';
  return iwmm::is_reliable(d, f.k_threshold) ? kExitOk : kExitUnreliable;
}

int cmd_experiment(const std::vector<double>& grid, int seeds, std::uint64_t data_seed,
                   const std::vector<std::string>& methods, const CommonFlags& f) {
  iwmm::OutlierExperimentConfig cfg;
  cfg.draws = f.draws;
  cfg.data_seed = data_seed;
  cfg.k_threshold = f.k_threshold;
  cfg.smoothing = !f.no_smoothing;
  if (!methods.empty()) {
    cfg.methods = methods;
  }
  const auto results = run_grid(grid, seeds, f, cfg);
  Output out(f.out);
  auto& os = out.stream();
  os << "y30,seed,method,elpd,analytic,abs_error,khat\n";
  for (std::size_t t = 0; t < results.size(); ++t) {
    for (const auto& r : results[t]) {
      os << iwmm::format_number(grid[t / static_cast<std::size_t>(seeds)]) << ','
         << t % static_cast<std::size_t>(seeds) << ',' << r.method << ','
         << iwmm::format_number(r.elpd) << ',' << iwmm::format_number(r.analytic) << ','
         << iwmm::format_number(std::abs(r.elpd - r.analytic)) << ','
         << iwmm::format_number(r.khat) << '\n';
    }
  }
  return kExitOk;
}

int cmd_ais_compare(double y30, int seeds, std::uint64_t data_seed, const CommonFlags& f) {
  iwmm::OutlierExperimentConfig cfg;
  cfg.draws = f.draws;
  cfg.data_seed = data_seed;
  cfg.k_threshold = f.k_threshold;
  cfg.smoothing = !f.no_smoothing;
  cfg.methods = {"psis_mm", "ais_g", "ais_t", "ais_g_x2", "ais_t_x2"};
  const auto results = run_grid({y30}, seeds, f, cfg);
  Output out(f.out);
  auto& os = out.stream();
  os << "seed,method,elpd,analytic,khat,iterations,target_evals,proposal_evals,function_evals,"
        "split_evals\n";
  for (std::size_t t = 0; t < results.size(); ++t) {
    for (const auto& r : results[t]) {
      os << t << ',' << r.method << ',' << iwmm::format_number(r.elpd) << ','
         << iwmm::format_number(r.analytic) << ',' << iwmm::format_number(r.khat) << ','
         << r.iterations << ',' << r.counters.target_evals << ',' << r.counters.proposal_evals
         << ',' << r.counters.function_evals << ',' << r.counters.split_evals << '\n';
    }
  }
  return kExitOk;
}

std::unique_ptr<iwmm::Model> make_model(const std::string& name) {
  if (name == "gaussian") {
    return std::make_unique<iwmm::GaussianModel>();
  }
  return std::make_unique<iwmm::PoissonGlmModel>();
}

int cmd_loo(const std::string& model_name, const std::string& data_path,
            const std::string& method, const std::string& csv_path, const CommonFlags& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto in = open_input(data_path);
  const iwmm::Dataset data = iwmm::read_dataset_csv(in);
  const auto model = make_model(model_name);
  model->validate(data);

  iwmm::LooOptions opts;
  opts.k_threshold = f.k_threshold;
  opts.smoothing = !f.no_smoothing;
  opts.refit_budget = f.refit_budget;
  opts.seed = iwmm::derive_seed(f.seed, 2);
  opts.threads = f.threads;

  iwmm::LooResult res;
  if (method == "naive") {
    res = iwmm::naive_loo(*model, data, f.draws, opts);
  } else {
    const iwmm::DrawMatrix draws =
        iwmm::sample_posterior(*model, data, f.draws, iwmm::derive_seed(f.seed, 1), opts.sampler);
    const Eigen::VectorXd log_post = model->log_joint_rows(draws, data);
    res = method == "psis" ? iwmm::psis_loo(*model, data, draws, log_post, opts)
                           : iwmm::mm_loo(*model, data, draws, log_post, opts);
  }

  Output out(f.out);
  out.stream() << iwmm::to_json(res).dump(2) << '\n';
  if (!csv_path.empty()) {
    Output csv(csv_path);
    iwmm::write_loo_csv(csv.stream(), res);
  }

  iwmm::EvalCounters total;
  for (const auto& fold : res.folds) {
    total += fold.counters;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "elpd_loo=" << iwmm::format_number(res.elpd_loo) << " n_bad=" << res.n_bad
            << " target_evals=" << total.target_evals
            << " proposal_evals=" << total.proposal_evals
            << " function_evals=" << total.function_evals << " split_evals=" << total.split_evals
            << " wall_s=" << secs << '\n';
  return res.n_bad > 0 ? kExitUnreliable : kExitOk;
}

int cmd_simulate(const std::string& kind, double y30, Eigen::Index n, const CommonFlags& f) {
  iwmm::Dataset d;
  if (kind == "gaussian-outlier") {
    d = iwmm::gaussian_outlier_data(f.seed, y30, n);
  } else {
    iwmm::CountDataConfig cfg;
    cfg.n = n;
    d = iwmm::simulate_count_data(f.seed, cfg);
  }
  Output out(f.out);
  iwmm::write_dataset_csv(out.stream(), d);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance weighted moment matching: diagnostics, LOO-CV and experiments"};
  app.require_subcommand(1);
  CommonFlags f;

  std::string weights_path;
  bool log_scale = false;
  auto* diagnose = app.add_subcommand("diagnose", "Pareto khat diagnostic of a weight file");
  diagnose->add_option("weights", weights_path, "CSV with one column of weights")->required();
  diagnose->add_flag("--log", log_scale, "Column holds log weights");
  add_threshold(diagnose, f);
  add_out(diagnose, f);

  auto* smooth = app.add_subcommand("smooth", "Pareto-smooth a weight file");
  smooth->add_option("weights", weights_path, "CSV with one column of weights")->required();
  smooth->add_flag("--log", log_scale, "Column holds log weights");
  add_threshold(smooth, f);
  add_out(smooth, f);

  std::vector<double> grid{0.0, 4.0, 8.0, 12.0, 16.0, 20.0};
  int seeds = 10;
  std::uint64_t data_seed = iwmm::OutlierExperimentConfig{}.data_seed;
  std::vector<std::string> methods;
  auto* experiment =
      app.add_subcommand("experiment-gaussian", "Single-outlier normal model sweep over y30");
  experiment->add_option("--y30", grid, "Outlier values")->capture_default_str()->check(
      CLI::Range(-1e6, 1e6));
  experiment->add_option("--seeds", seeds, "Replicates per grid point")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  experiment->add_option("--data-seed", data_seed, "Seed of the 29 fixed observations")
      ->capture_default_str();
  experiment->add_option("--methods", methods, "Subset of methods")
      ->check(CLI::IsMember(iwmm::outlier_experiment_methods()));
  for (auto* add : {add_seed, add_draws, add_threshold, add_smoothing, add_threads, add_out}) {
    add(experiment, f);
  }

  double y30 = 20.0;
  auto* ais = app.add_subcommand("ais-compare", "Estimates and cost counters, PSIS+MM vs AIS");
  ais->add_option("--y30", y30, "Outlier value")->capture_default_str();
  ais->add_option("--seeds", seeds, "Replicates")->capture_default_str()->check(
      CLI::PositiveNumber);
  ais->add_option("--data-seed", data_seed, "Seed of the 29 fixed observations")
      ->capture_default_str();
  for (auto* add : {add_seed, add_draws, add_threshold, add_smoothing, add_threads, add_out}) {
    add(ais, f);
  }

  std::string model_name;
  std::string data_path;
  std::string loo_method = "mm";
  std::string csv_path;
  auto* loo = app.add_subcommand("loo", "Leave-one-out cross-validation of a bundled model");
  loo->add_option("--model", model_name, "Model")
      ->required()
      ->check(CLI::IsMember({"gaussian", "poisson_glm"}));
  loo->add_option("--data", data_path, "Data CSV (y[, x1..xP][, offset])")->required();
  loo->add_option("--method", loo_method, "psis, mm or naive")
      ->capture_default_str()
      ->check(CLI::IsMember({"psis", "mm", "naive"}));
  loo->add_option("--csv", csv_path, "Per-fold CSV output");
  loo->add_option("--refit-budget", f.refit_budget, "Maximum number of refits")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  for (auto* add : {add_seed, add_draws, add_threshold, add_smoothing, add_threads, add_out}) {
    add(loo, f);
  }

  std::string kind = "poisson";
  Eigen::Index n = 100;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset as CSV");
  simulate->add_option("--kind", kind, "poisson or gaussian-outlier")
      ->capture_default_str()
      ->check(CLI::IsMember({"poisson", "gaussian-outlier"}));
  simulate->add_option("--n", n, "Observations (base observations for gaussian-outlier)")
      ->capture_default_str()
      ->check(CLI::Range(Eigen::Index{3}, Eigen::Index{1'000'000}));
  simulate->add_option("--y30", y30, "Outlier value for gaussian-outlier")->capture_default_str();
  add_seed(simulate, f);
  add_out(simulate, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (diagnose->parsed()) {
      return cmd_diagnose(weights_path, log_scale, f);
    }
    if (smooth->parsed()) {
      return cmd_smooth(weights_path, log_scale, f);
    }
    if (experiment->parsed()) {
      return cmd_experiment(grid, seeds, data_seed, methods, f);
    }
    if (ais->parsed()) {
      return cmd_ais_compare(y30, seeds, data_seed, f);
    }
    if (loo->parsed()) {
      return cmd_loo(model_name, data_path, loo_method, csv_path, f);
    }
    if (simulate->parsed()) {
      return cmd_simulate(kind, y30, n, f);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
