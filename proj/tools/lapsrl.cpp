// Command-line front end: run experiments, self-check, fit regret curves.

#include "lapsrl/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRun = 3;

struct RunArgs {
  std::string config;
  std::string env;
  std::string agent;
  bool chained = false;
  bool no_chained = false;
  std::optional<double> alpha_scale;
  std::optional<int> episodes;
  std::optional<int> seeds;
  std::string eps_mode;
  std::string out;
  std::optional<int> jobs;
  bool timing = false;
};

int cmd_run(const RunArgs& args) {
  nlohmann::json j = nlohmann::json::object();
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) throw lapsrl::ValidationError("cannot read config " + args.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw lapsrl::ValidationError(std::string("invalid config JSON: ") + e.what());
    }
  }
  if (!args.env.empty()) j["env"]["kind"] = args.env;
  if (!args.agent.empty()) j["agent"]["kind"] = args.agent;
  if (args.chained && args.no_chained) throw lapsrl::ValidationError("--chained and --no-chained conflict");
  if (args.chained) j["agent"]["chained"] = true;
  if (args.no_chained) j["agent"]["chained"] = false;
  if (args.alpha_scale) j["agent"]["alpha_scale"] = *args.alpha_scale;
  if (!args.eps_mode.empty()) j["agent"]["eps_mode"] = args.eps_mode;
  if (args.episodes) j["episodes"] = *args.episodes;
  if (args.seeds) j["seeds"] = *args.seeds;
  if (!args.out.empty()) j["out"] = args.out;
  if (args.jobs) j["jobs"] = *args.jobs;
  if (args.timing) j["timing"] = true;

  lapsrl::ExperimentConfig cfg;
  try {
    cfg = lapsrl::parse_experiment(j);
  } catch (const nlohmann::json::exception& e) {
    throw lapsrl::ValidationError(std::string("invalid config: ") + e.what());
  }
  const auto summary = lapsrl::run_experiment(cfg);
  const auto& last = summary.episodes.empty() ? lapsrl::EpisodeSummary{} : summary.episodes.back();
  std::printf("wrote %s (%zu rows); final mean cumulative regret %.6g +- %.3g over %zu runs\n",
              cfg.out.c_str(), summary.rows.size(), last.mean_cumulative_regret,
              last.se_cumulative_regret, last.runs);
  if (!summary.failed_seeds.empty()) {
    std::printf("failed seeds:");
    for (auto s : summary.failed_seeds) std::printf(" %llu", static_cast<unsigned long long>(s));
    std::printf("\n");
    return kExitRun;
  }
  return 0;
}

int cmd_fit(const std::string& path, double burn_in) {
  std::ifstream in(path);
  if (!in) throw lapsrl::ValidationError("cannot read " + path);
  const auto rows = lapsrl::parse_csv(in);
  const auto fit = lapsrl::sublinearity_fit(lapsrl::mean_regret_curve(rows), burn_in);
  if (fit.degenerate) {
    std::printf("regret is identically zero; exponent 0\n");
  } else {
    std::printf("exponent %.6f intercept %.6f points %zu\n", fit.exponent, fit.intercept, fit.points);
  }
  return 0;
}

bool report(const char* name, bool ok, double got, double want) {
  std::printf("%s %-36s got %.10g want %.10g\n", ok ? "ok  " : "FAIL", name, got, want);
  return ok;
}

int cmd_check() {
  using namespace lapsrl;
  bool ok = true;

  // Conjugate Gaussian mean: prior N(0,1), noise 1/4, one observation of 1.
  const std::vector<double> one{1.0};
  const auto post = gaussian_mean_conjugate({0.0, 1.0}, one, 0.25);
  ok &= report("conjugate posterior mean", std::abs(post.mean - 0.8) < 1e-12, post.mean, 0.8);
  ok &= report("conjugate posterior variance", std::abs(post.variance - 0.2) < 1e-12, post.variance, 0.2);

  // Scalar DARE with A = B = Q = R = 1 converges to the golden ratio.
  const Matrix I1 = Matrix::Identity(1, 1);
  const auto dare = solve_dare(I1, I1, I1, I1);
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  ok &= report("scalar DARE", std::abs(dare.P(0, 0) - phi) < 1e-8, dare.P(0, 0), phi);

  ok &= report("KL N(0,1) || N(1,1)", std::abs(kl_gaussian({0, 1}, {1, 1}) - 0.5) < 1e-12,
               kl_gaussian({0, 1}, {1, 1}), 0.5);

  // Short SARAH-LD run on the conjugate model lands near the exact posterior.
  const GaussianArmModel model({0.0, 1.0}, 0.25);
  Rng rng(7);
  std::normal_distribution<double> obs(0.5, 0.5);
  std::vector<double> data(20);
  for (double& x : data) x = obs(rng);
  const auto exact = gaussian_mean_conjugate({0.0, 1.0}, data, 0.25);
  const auto n = static_cast<std::int64_t>(data.size());
  const auto sched = langevin_schedule(model.lsi_alpha(n), model.smooth_L(n), n, 1, 0.05, 1.0);
  std::vector<double> draws;
  for (std::uint64_t s = 0; s < 400; ++s) {
    draws.push_back(sarah_ld(model, std::span<const double>(data), sched,
                             ParamVector::Constant(1, exact.mean), s)
                        .theta[0]);
  }
  const double kl = kl_gaussian(moment_fit(draws), exact);
  ok &= report("SARAH-LD moment KL to posterior", kl < 0.05, kl, 0.0);

  std::printf("%s\n", ok ? "all checks passed" : "some checks failed");
  return ok ? 0 : kExitRun;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Langevin posterior sampling for reinforcement learning"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an experiment and write CSV results");
  run->add_option("--config", run_args.config, "JSON experiment config");
  run->add_option("--env", run_args.env, "bandit | cartpole | reacher");
  run->add_option("--agent", run_args.agent, "psrl | lapsrl | scripted");
  run->add_flag("--chained", run_args.chained, "Warm-start each draw from the previous one");
  run->add_flag("--no-chained", run_args.no_chained, "Initialize each draw from the prior");
  run->add_option("--alpha-scale", run_args.alpha_scale, "Declared LSI constant per data point");
  run->add_option("--episodes", run_args.episodes, "Episodes per seed");
  run->add_option("--seeds", run_args.seeds, "Number of seeds (0..N-1)");
  run->add_option("--eps-mode", run_args.eps_mode, "alg2 | corollary");
  run->add_option("--out", run_args.out, "Output CSV path");
  run->add_option("--jobs", run_args.jobs, "Concurrent seeds");
  run->add_flag("--timing", run_args.timing, "Record wall-clock time");

  auto* check = app.add_subcommand("check", "Run built-in consistency checks");

  std::string fit_in;
  double burn_in = 0.1;
  auto* fit = app.add_subcommand("fit", "Fit a power law to the mean cumulative regret");
  fit->add_option("--in", fit_in, "Results CSV")->required();
  fit->add_option("--burn-in", burn_in, "Leading fraction of episodes to drop");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*check) return cmd_check();
    if (*fit) return cmd_fit(fit_in, burn_in);
  } catch (const lapsrl::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRun;
  }
  return 0;
}
