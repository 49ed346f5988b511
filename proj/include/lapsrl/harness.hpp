#pragma once

// Experiment runner: JSON configuration, per-seed fan-out, CSV results with a
// JSON summary sidecar, and regret/KL diagnostics.

#include "lapsrl/agents.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <future>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace lapsrl {

// ---------------------------------------------------------------------------
// Diagnostics

/// KL(p || q) between univariate Gaussians.
inline double kl_gaussian(const GaussianPosterior& p, const GaussianPosterior& q) {
  validate(p);
  validate(q);
  const double d = p.mean - q.mean;
  return 0.5 * std::log(q.variance / p.variance) + (p.variance + d * d) / (2.0 * q.variance) - 0.5;
}

/// Mean and (population) variance of a sample.
inline GaussianPosterior moment_fit(std::span<const double> xs) {
  require(xs.size() >= 2, "moment fit needs at least two samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, var / static_cast<double>(xs.size())};
}

struct PowerFit {
  double exponent = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
  /// Regret was identically zero.
  bool degenerate = false;
};

/// Least-squares slope of log(value) against log(t). Points up to the last
/// nonpositive value are dropped, then the first `burn_in` fraction of the rest.
inline PowerFit sublinearity_fit(std::span<const std::pair<double, double>> curve,
                                 double burn_in = 0.1) {
  require(curve.size() >= 10, "power-law fit needs at least 10 points");
  require(burn_in >= 0.0 && burn_in < 1.0, "burn-in fraction must lie in [0, 1)");
  for (std::size_t i = 1; i < curve.size(); ++i)
    require(curve[i].first > curve[i - 1].first, "t must be strictly increasing");
  require(curve.front().first > 0.0, "t must be positive");

  PowerFit fit;
  if (std::all_of(curve.begin(), curve.end(), [](const auto& p) { return p.second == 0.0; })) {
    fit.degenerate = true;
    return fit;
  }
  std::size_t start = 0;
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (!(curve[i].second > 0.0)) start = i + 1;
  start += static_cast<std::size_t>(burn_in * static_cast<double>(curve.size() - start));
  require(curve.size() - start >= 2, "too few positive points to fit");

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto m = static_cast<double>(curve.size() - start);
  for (std::size_t i = start; i < curve.size(); ++i) {
    const double x = std::log(curve[i].first), y = std::log(curve[i].second);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  fit.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  fit.intercept = (sy - fit.exponent * sx) / m;
  fit.points = curve.size() - start;
  return fit;
}

inline PowerFit sublinearity_fit(const std::vector<std::pair<double, double>>& curve,
                                 double burn_in = 0.1) {
  return sublinearity_fit(std::span<const std::pair<double, double>>(curve), burn_in);
}

// ---------------------------------------------------------------------------
// Result rows and CSV

struct ResultRow {
  std::uint64_t seed = 0;
  int episode = 0;
  double episode_regret = 0.0;
  double cumulative_regret = 0.0;
  double eps_l = 0.0;
  std::int64_t grad_evals = 0;
  /// 1 solved, 0 not solved, -1 the run failed.
  int solved = 0;
  double wall_ms = 0.0;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kCsvHeader =
    "seed,episode,episode_regret,cumulative_regret,eps_l,grad_evals,solved,wall_ms";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, std::span<const ResultRow> rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.seed << ',' << r.episode << ',' << format_double(r.episode_regret) << ','
       << format_double(r.cumulative_regret) << ',' << format_double(r.eps_l) << ',' << r.grad_evals
       << ',' << r.solved << ',' << format_double(r.wall_ms) << '\n';
  }
}

namespace detail {

// Whole-field parse; accepts subnormals and the nan/inf spellings written by format_double.
template <class T>
bool parse_field(const std::string& s, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    if (s == "nan" || s == "-nan") return out = std::numeric_limits<T>::quiet_NaN(), true;
    if (s == "inf" || s == "-inf") return out = (s[0] == '-' ? -1 : 1) * std::numeric_limits<T>::infinity(), true;
  }
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace detail

inline std::vector<ResultRow> parse_csv(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kCsvHeader, "unexpected results header: " + line);
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[8];
    for (auto& field : f) require(static_cast<bool>(std::getline(ls, field, ',')), "short CSV row: " + line);
    ResultRow r;
    const bool ok = detail::parse_field(f[0], r.seed) && detail::parse_field(f[1], r.episode) &&
                    detail::parse_field(f[2], r.episode_regret) && detail::parse_field(f[3], r.cumulative_regret) &&
                    detail::parse_field(f[4], r.eps_l) && detail::parse_field(f[5], r.grad_evals) &&
                    detail::parse_field(f[6], r.solved) && detail::parse_field(f[7], r.wall_ms);
    require(ok, "malformed CSV row: " + line);
    rows.push_back(r);
  }
  return rows;
}

/// Converts one run's records into rows with prefix-summed regret.
inline std::vector<ResultRow> to_rows(std::uint64_t seed, const std::vector<EpisodeRecord>& recs,
                                      const std::vector<double>& wall_ms = {}) {
  std::vector<ResultRow> rows;
  double cum = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    cum += r.episode_regret;
    rows.push_back({seed, r.episode, r.episode_regret, cum, r.eps_l, r.grad_evals, r.solved ? 1 : 0,
                    i < wall_ms.size() ? wall_ms[i] : 0.0});
  }
  return rows;
}

struct EpisodeSummary {
  int episode = 0;
  std::size_t runs = 0;
  double mean_cumulative_regret = 0.0;
  double se_cumulative_regret = 0.0;
  double solved_fraction = 0.0;
  double mean_grad_evals = 0.0;
};

/// Across-seed mean and standard error (sample sd / sqrt(S)) per episode,
/// over runs that did not fail.
inline std::vector<EpisodeSummary> summarize(std::span<const ResultRow> rows) {
  std::map<int, std::vector<const ResultRow*>> by_episode;
  for (const auto& r : rows)
    if (r.solved >= 0) by_episode[r.episode].push_back(&r);
  std::vector<EpisodeSummary> out;
  for (const auto& [ep, rs] : by_episode) {
    EpisodeSummary s;
    s.episode = ep;
    s.runs = rs.size();
    const double S = static_cast<double>(rs.size());
    for (const auto* r : rs) {
      s.mean_cumulative_regret += r->cumulative_regret / S;
      s.solved_fraction += r->solved / S;
      s.mean_grad_evals += static_cast<double>(r->grad_evals) / S;
    }
    if (rs.size() > 1) {
      double ss = 0.0;
      for (const auto* r : rs) ss += std::pow(r->cumulative_regret - s.mean_cumulative_regret, 2);
      s.se_cumulative_regret = std::sqrt(ss / (S - 1.0)) / std::sqrt(S);
    }
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class EnvKind { bandit, cartpole, reacher };
enum class AgentKind { psrl, lapsrl, scripted };

inline EnvKind parse_env_kind(std::string_view s) {
  if (s == "bandit") return EnvKind::bandit;
  if (s == "cartpole") return EnvKind::cartpole;
  if (s == "reacher") return EnvKind::reacher;
  throw ValidationError("unknown environment: " + std::string(s));
}

inline AgentKind parse_agent_kind(std::string_view s) {
  if (s == "psrl") return AgentKind::psrl;
  if (s == "lapsrl") return AgentKind::lapsrl;
  if (s == "scripted") return AgentKind::scripted;
  throw ValidationError("unknown agent: " + std::string(s));
}

struct ExperimentConfig {
  EnvKind env = EnvKind::bandit;
  std::vector<Arm> arms{{0.0, 0.25}, {0.1, 0.25}};
  int batch = 20;
  CartpoleParams cartpole{};
  ReacherParams reacher{};

  AgentKind agent = AgentKind::lapsrl;
  /// "gaussian" or "mixture" (bandit priors).
  std::string prior = "gaussian";
  ModelConfig model{};
  AgentConfig agent_cfg{};
  /// Arm pulled by the scripted bandit agent.
  std::size_t scripted_arm = 0;

  std::vector<std::uint64_t> seeds{0};
  int episodes = 1;
  std::string out = "results.csv";
  /// Record wall-clock time per episode; off keeps output byte-reproducible.
  bool timing = false;
  int jobs = 0;

  void validate() const {
    require(!seeds.empty(), "at least one seed is required");
    require(episodes >= 1, "episodes must be >= 1");
    require(!out.empty(), "output path must not be empty");
    if (agent == AgentKind::scripted) {
      require(env == EnvKind::bandit, "the scripted agent is bandit-only");
      require(scripted_arm < arms.size(), "scripted arm index out of range");
    }
    if (agent == AgentKind::psrl)
      require(env != EnvKind::reacher, "no closed-form posterior exists for the reacher MLP model");
    require(prior == "gaussian" || prior == "mixture", "prior must be gaussian or mixture");
  }
};

/// Per-environment defaults applied before JSON fields are read.
inline void apply_env_defaults(ExperimentConfig& cfg) {
  switch (cfg.env) {
    case EnvKind::bandit:
      cfg.agent_cfg.chained = true;
      break;
    case EnvKind::cartpole:
      cfg.agent_cfg.chained = false;
      cfg.agent_cfg.step_cap = 10000;
      cfg.model.alpha_scale = 1000.0;
      cfg.model.state_dim = 4;
      cfg.model.action_dim = 1;
      break;
    case EnvKind::reacher:
      cfg.agent_cfg.chained = true;
      cfg.agent_cfg.step_cap = 150000;
      cfg.model.alpha_scale = 10000.0;
      cfg.model.state_dim = 4;
      cfg.model.action_dim = 2;
      break;
  }
}

inline ExperimentConfig parse_experiment(const nlohmann::json& j) {
  ExperimentConfig cfg;
  const auto env = j.value("env", nlohmann::json::object());
  cfg.env = parse_env_kind(env.value("kind", "bandit"));
  apply_env_defaults(cfg);

  if (env.contains("arms")) {
    cfg.arms.clear();
    for (const auto& a : env.at("arms")) cfg.arms.push_back({a.at("mean").get<double>(), a.at("variance").get<double>()});
  }
  cfg.batch = env.value("batch", cfg.batch);
  cfg.cartpole.horizon = env.value("horizon", cfg.env == EnvKind::reacher ? cfg.reacher.horizon : cfg.cartpole.horizon);
  cfg.reacher.horizon = env.value("horizon", cfg.reacher.horizon);

  const auto agent = j.value("agent", nlohmann::json::object());
  cfg.agent = parse_agent_kind(agent.value("kind", "lapsrl"));
  cfg.prior = agent.value("prior", cfg.prior);
  cfg.scripted_arm = agent.value("arm", cfg.scripted_arm);
  auto& a = cfg.agent_cfg;
  a.chained = agent.value("chained", a.chained);
  a.g_order = agent.value("g_order", a.g_order);
  a.delta_max = agent.value("delta_max", a.delta_max);
  if (agent.contains("eps_mode")) a.eps_mode = parse_eps_mode(agent.at("eps_mode").get<std::string>());
  if (agent.contains("step_cap") && !agent.at("step_cap").is_null()) a.step_cap = agent.at("step_cap").get<std::int64_t>();
  if (agent.contains("kl0_bound") && !agent.at("kl0_bound").is_null()) a.kl0_bound = agent.at("kl0_bound").get<double>();
  a.lqr_q = agent.value("lqr_q", a.lqr_q);
  a.lqr_r = agent.value("lqr_r", a.lqr_r);
  a.planner.horizon = agent.value("planning_horizon", a.planner.horizon);
  a.planner.iterations = agent.value("planner_iterations", a.planner.iterations);
  a.planner.samples = agent.value("planner_samples", a.planner.samples);
  a.planner.elites = agent.value("planner_elites", a.planner.elites);

  auto& m = cfg.model;
  m.alpha_scale = agent.value("alpha_scale", m.alpha_scale);
  m.noise_var = agent.value("noise_var", m.noise_var);
  if (agent.contains("prior_var")) m.prior_var = agent.at("prior_var").get<double>();
  m.hidden = agent.value("hidden", m.hidden);
  if (agent.contains("mixture")) {
    m.mixture.components.clear();
    for (const auto& c : agent.at("mixture"))
      m.mixture.components.push_back({c.at("weight").get<double>(), c.at("mean").get<double>(), c.at("variance").get<double>()});
  }

  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    cfg.seeds.clear();
    if (s.is_number_integer()) {
      const auto base = j.value("seed_base", std::uint64_t{0});
      const auto count = s.get<std::int64_t>();
      require(count >= 1, "seeds must be >= 1");
      for (std::int64_t i = 0; i < count; ++i) cfg.seeds.push_back(base + static_cast<std::uint64_t>(i));
    } else {
      for (const auto& v : s) cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  cfg.episodes = j.value("episodes", cfg.episodes);
  cfg.out = j.value("out", cfg.out);
  cfg.timing = j.value("timing", cfg.timing);
  cfg.jobs = j.value("jobs", cfg.jobs);
  return cfg;
}

// ---------------------------------------------------------------------------
// Running

/// Runs one seed of the configured agent.
inline std::vector<EpisodeRecord> run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  switch (cfg.env) {
    case EnvKind::bandit: {
      const BanditEnv env(cfg.arms, cfg.batch);
      if (cfg.agent == AgentKind::scripted) return scripted_bandit(env, cfg.scripted_arm, cfg.episodes, seed);
      if (cfg.agent == AgentKind::psrl) {
        if (cfg.prior == "mixture") return psrl_exact_bandit(env, cfg.model.mixture, cfg.episodes, seed);
        return psrl_exact_bandit(env, GaussianPosterior{cfg.model.prior_mean, cfg.model.prior_var.value_or(1.0)},
                                 cfg.episodes, seed);
      }
      const auto kind = cfg.prior == "mixture" ? ModelKind::mixture_prior_arm : ModelKind::gaussian_bandit_arm;
      const AnyModel model = make_model(kind, cfg.model);
      return std::visit(
          [&](const auto& m) -> std::vector<EpisodeRecord> {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<typename M::Datum, double>) {
              return lapsrl_bandit(env, m, cfg.agent_cfg, cfg.episodes, seed);
            } else {
              throw ValidationError("bandit agents need an arm model");
            }
          },
          model);
    }
    case EnvKind::cartpole: {
      if (cfg.agent == AgentKind::psrl) {
        return psrl_exact_cartpole(cfg.cartpole, {cfg.model.prior_var.value_or(1.0), cfg.model.noise_var},
                                   cfg.agent_cfg, cfg.episodes, seed);
      }
      const auto model = std::get<LinearDynamicsModel>(make_model(ModelKind::linear_dynamics, cfg.model));
      return lapsrl_cartpole(cfg.cartpole, model, cfg.agent_cfg, cfg.episodes, seed);
    }
    case EnvKind::reacher: {
      const auto model = std::get<MlpDynamicsModel>(make_model(ModelKind::mlp_dynamics, cfg.model));
      return lapsrl_reacher(cfg.reacher, model, cfg.agent_cfg, cfg.episodes, seed);
    }
  }
  throw ValidationError("unknown environment");
}

struct RunOutcome {
  std::uint64_t seed = 0;
  std::vector<ResultRow> rows;
  std::string error;
};

struct ExperimentSummary {
  std::vector<EpisodeSummary> episodes;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<ResultRow> rows;
};

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const ExperimentSummary& s) {
  nlohmann::json j;
  j["episodes"] = cfg.episodes;
  j["seeds"] = cfg.seeds;
  j["failed_seeds"] = s.failed_seeds;
  auto& per = j["per_episode"] = nlohmann::json::array();
  for (const auto& e : s.episodes) {
    per.push_back({{"episode", e.episode},
                   {"runs", e.runs},
                   {"mean_cumulative_regret", e.mean_cumulative_regret},
                   {"se_cumulative_regret", e.se_cumulative_regret},
                   {"solved_fraction", e.solved_fraction},
                   {"mean_grad_evals", e.mean_grad_evals}});
  }
  return j;
}

inline std::string summary_path(const std::string& out) { return out + ".summary.json"; }

/// Runs every seed, writes the CSV (ordered by seed, then episode) and
/// the JSON summary next to it. A failing seed yields one row with solved = -1.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::ofstream csv(cfg.out, std::ios::binary | std::ios::trunc);
  if (!csv) throw RunError("cannot open output file " + cfg.out);
  std::ofstream side(summary_path(cfg.out), std::ios::binary | std::ios::trunc);
  if (!side) throw RunError("cannot open summary file " + summary_path(cfg.out));

  auto one = [&cfg](std::uint64_t seed) {
    RunOutcome o{seed, {}, {}};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto recs = run_single(cfg, seed);
      std::vector<double> wall;
      if (cfg.timing) {
        // Whole-run wall time spread evenly; per-episode timers would need agent hooks.
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        wall.assign(recs.size(), recs.empty() ? 0.0 : ms / static_cast<double>(recs.size()));
      }
      o.rows = to_rows(seed, recs, wall);
    } catch (const std::exception& e) {
      o.error = e.what();
      o.rows = {{seed, 0, std::nan(""), std::nan(""), std::nan(""), 0, -1, 0.0}};
    }
    return o;
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t jobs = cfg.jobs > 0 ? static_cast<std::size_t>(cfg.jobs) : hw;
  std::vector<RunOutcome> outcomes(cfg.seeds.size());
  for (std::size_t begin = 0; begin < cfg.seeds.size(); begin += jobs) {
    const std::size_t end = std::min(cfg.seeds.size(), begin + jobs);
    if (end - begin == 1) {
      outcomes[begin] = one(cfg.seeds[begin]);
      continue;
    }
    std::vector<std::future<RunOutcome>> futs;
    for (std::size_t i = begin; i < end; ++i) futs.push_back(std::async(std::launch::async, one, cfg.seeds[i]));
    for (std::size_t i = begin; i < end; ++i) outcomes[i] = futs[i - begin].get();
  }

  ExperimentSummary s;
  for (auto& o : outcomes) {
    if (!o.error.empty()) s.failed_seeds.push_back(o.seed);
    s.rows.insert(s.rows.end(), o.rows.begin(), o.rows.end());
  }
  std::stable_sort(s.rows.begin(), s.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return a.seed != b.seed ? a.seed < b.seed : a.episode < b.episode;
  });
  std::sort(s.failed_seeds.begin(), s.failed_seeds.end());
  s.episodes = summarize(s.rows);
  write_csv(csv, s.rows);
  side << summary_json(cfg, s).dump(2) << '\n';
  if (!csv || !side) throw RunError("failed writing results");
  return s;
}

/// Across-seed mean cumulative regret per episode as a (t, regret) curve.
inline std::vector<std::pair<double, double>> mean_regret_curve(std::span<const ResultRow> rows) {
  std::vector<std::pair<double, double>> curve;
  for (const auto& e : summarize(rows)) curve.emplace_back(e.episode, e.mean_cumulative_regret);
  return curve;
}

}  // namespace lapsrl
