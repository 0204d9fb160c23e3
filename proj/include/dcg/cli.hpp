#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcg/checkpoint.hpp"
#include "dcg/env.hpp"
#include "dcg/errors.hpp"
#include "dcg/graph.hpp"
#include "dcg/models.hpp"
#include "dcg/trainer.hpp"

namespace dcg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Everything a run needs, serialized as one flat JSON object.
struct ExperimentConfig {
  std::string name = "run";
  std::string out = "runs";
  std::vector<std::uint64_t> seeds{0};
  std::size_t checkpoint_every = 0;  // env steps between checkpoints, 0 = final only
  bool wall_clock = false;           // false writes wall_ms = 0 for reproducible metrics

  std::string algo = "dcg";
  std::string topology = "full";
  std::size_t rank = 0;
  std::size_t lrq_factors = 64;
  bool nps = false;
  std::size_t hidden = 64;
  std::size_t k_passes = 8;
  bool msg_norm = true;
  std::size_t ascent_iters = 8;

  std::string env = "pp-coop";
  double p = 0.0;
  std::int64_t grid_w = 10;
  std::int64_t grid_h = 10;
  std::size_t n_agents = 8;
  std::size_t n_prey = 8;
  std::size_t episode_limit = 200;
  std::int64_t obs_window = 5;
  double catch_reward = 10.0;

  double gamma = 0.99;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_anneal_steps = 50000;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 500;
  std::size_t target_update_episodes = 200;
  std::size_t eval_interval_steps = 2000;
  std::size_t eval_episodes = 20;
  std::size_t steps = 1'000'000;
  double lr = 0.0005;
  double rms_alpha = 0.99;
  double rms_eps = 1e-5;
  double clip_norm = 10.0;

  env::EnvConfig env_config() const {
    env::EnvConfig e;
    e.task = env::parse_task(env);
    e.grid_w = static_cast<int>(grid_w);
    e.grid_h = static_cast<int>(grid_h);
    e.n_agents = n_agents;
    e.n_prey = n_prey;
    e.punishment = p;
    e.episode_limit = episode_limit;
    e.obs_window = static_cast<int>(obs_window);
    e.catch_reward = catch_reward;
    return e;
  }

  models::ModelConfig model_config() const {
    const env::EnvConfig e = env_config();
    models::ModelConfig m;
    m.algo = models::parse_algo(algo);
    m.n_agents = n_agents;
    m.n_actions = env::kNumActions;
    m.obs_dim = e.obs_dim();
    m.state_dim = e.state_dim();
    m.hidden = hidden;
    m.rank = rank;
    m.lrq_factors = lrq_factors;
    m.share = !nps;
    m.graph = build_topology(parse_topology(topology), n_agents);
    m.k_passes = k_passes;
    m.msg_norm = msg_norm;
    m.ascent_iters = ascent_iters;
    return m;
  }

  train::TrainConfig train_config() const {
    train::TrainConfig t;
    t.gamma = gamma;
    t.eps_start = eps_start;
    t.eps_end = eps_end;
    t.eps_anneal_steps = eps_anneal_steps;
    t.batch_size = batch_size;
    t.buffer_capacity = buffer_capacity;
    t.target_update_episodes = target_update_episodes;
    t.eval_interval_steps = eval_interval_steps;
    t.eval_episodes = eval_episodes;
    t.total_env_steps = steps;
    t.rmsprop = {lr, rms_alpha, rms_eps};
    t.clip_norm = clip_norm;
    return t;
  }
};

namespace detail {

enum class Kind { Str, UInt, Int, Real, Bool, SeedList };

struct Field {
  const char* key;
  Kind kind;
  std::function<json(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const json&)> set;
};

#define DCG_FIELD(member, kind, type) \
  Field { #member, kind, [](const ExperimentConfig& c) { return json(c.member); }, [](ExperimentConfig& c, const json& v) { c.member = v.get<type>(); } }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DCG_FIELD(name, Kind::Str, std::string),
      DCG_FIELD(out, Kind::Str, std::string),
      DCG_FIELD(seeds, Kind::SeedList, std::vector<std::uint64_t>),
      DCG_FIELD(checkpoint_every, Kind::UInt, std::size_t),
      DCG_FIELD(wall_clock, Kind::Bool, bool),
      DCG_FIELD(algo, Kind::Str, std::string),
      DCG_FIELD(topology, Kind::Str, std::string),
      DCG_FIELD(rank, Kind::UInt, std::size_t),
      DCG_FIELD(lrq_factors, Kind::UInt, std::size_t),
      DCG_FIELD(nps, Kind::Bool, bool),
      DCG_FIELD(hidden, Kind::UInt, std::size_t),
      DCG_FIELD(k_passes, Kind::UInt, std::size_t),
      DCG_FIELD(msg_norm, Kind::Bool, bool),
      DCG_FIELD(ascent_iters, Kind::UInt, std::size_t),
      DCG_FIELD(env, Kind::Str, std::string),
      DCG_FIELD(p, Kind::Real, double),
      DCG_FIELD(grid_w, Kind::Int, std::int64_t),
      DCG_FIELD(grid_h, Kind::Int, std::int64_t),
      DCG_FIELD(n_agents, Kind::UInt, std::size_t),
      DCG_FIELD(n_prey, Kind::UInt, std::size_t),
      DCG_FIELD(episode_limit, Kind::UInt, std::size_t),
      DCG_FIELD(obs_window, Kind::Int, std::int64_t),
      DCG_FIELD(catch_reward, Kind::Real, double),
      DCG_FIELD(gamma, Kind::Real, double),
      DCG_FIELD(eps_start, Kind::Real, double),
      DCG_FIELD(eps_end, Kind::Real, double),
      DCG_FIELD(eps_anneal_steps, Kind::UInt, std::size_t),
      DCG_FIELD(batch_size, Kind::UInt, std::size_t),
      DCG_FIELD(buffer_capacity, Kind::UInt, std::size_t),
      DCG_FIELD(target_update_episodes, Kind::UInt, std::size_t),
      DCG_FIELD(eval_interval_steps, Kind::UInt, std::size_t),
      DCG_FIELD(eval_episodes, Kind::UInt, std::size_t),
      DCG_FIELD(steps, Kind::UInt, std::size_t),
      DCG_FIELD(lr, Kind::Real, double),
      DCG_FIELD(rms_alpha, Kind::Real, double),
      DCG_FIELD(rms_eps, Kind::Real, double),
      DCG_FIELD(clip_norm, Kind::Real, double),
  };
  return f;
}

#undef DCG_FIELD

inline bool non_negative_integer(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

inline bool type_ok(Kind k, const json& v) {
  switch (k) {
    case Kind::Str: return v.is_string();
    case Kind::UInt: return non_negative_integer(v);
    case Kind::Int: return v.is_number_integer();
    case Kind::Real: return v.is_number();
    case Kind::Bool: return v.is_boolean();
    case Kind::SeedList: {
      if (!v.is_array()) return false;
      for (const auto& x : v)
        if (!non_negative_integer(x)) return false;
      return true;
    }
  }
  return false;
}

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Str: return "a string";
    case Kind::UInt: return "a non-negative integer";
    case Kind::Int: return "an integer";
    case Kind::Real: return "a number";
    case Kind::Bool: return "a boolean";
    case Kind::SeedList: return "an array of non-negative integers";
  }
  return "?";
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json j = json::object();
  for (const auto& f : detail::fields()) j[f.key] = f.get(c);
  return j;
}

/// Applies the keys of `j` on top of `base`. Unknown keys and type mismatches
/// raise ConfigError naming the key.
inline void apply_json(ExperimentConfig& base, const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    const detail::Field* field = nullptr;
    for (const auto& f : detail::fields())
      if (key == f.key) field = &f;
    if (!field) throw ConfigError("unknown configuration key '" + key + "'");
    if (!detail::type_ok(field->kind, value)) throw ConfigError("key '" + key + "' must be " + detail::kind_name(field->kind));
    field->set(base, value);
  }
}

/// Checks every module invariant; errors name the offending key.
inline void validate(const ExperimentConfig& c) {
  auto wrap = [](const char* key, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("key '") + key + "': " + e.what());
    }
  };
  if (c.name.empty() || c.name.find('/') != std::string::npos) throw ConfigError("key 'name': must be a non-empty plain name");
  if (c.seeds.empty()) throw ConfigError("key 'seeds': at least one seed is required");
  wrap("algo", [&] { models::parse_algo(c.algo); });
  wrap("env", [&] { env::parse_task(c.env); });
  wrap("topology", [&] { build_topology(parse_topology(c.topology), c.n_agents); });
  wrap("env", [&] { c.env_config().validate(); });
  wrap("algo", [&] { c.model_config().validate(); });
  wrap("steps", [&] { c.train_config().validate(); });
  if (c.eval_episodes == 0) throw ConfigError("key 'eval_episodes': must be positive");
}

/// defaults <- file <- flags, then validated.
inline ExperimentConfig parse_config(const json& flags, const std::optional<fs::path>& file = std::nullopt) {
  ExperimentConfig c;
  if (file) {
    std::ifstream f(*file);
    if (!f) throw ConfigError("cannot read config file " + file->string());
    json j;
    try {
      j = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
    apply_json(c, j);
  }
  apply_json(c, flags);
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Metrics.

inline constexpr const char* kMetricsHeader = "step,episode,mean_test_return,std_test_return,loss,epsilon,wall_ms";

struct MetricsRow {
  std::size_t step = 0;
  std::size_t episode = 0;
  double mean_test_return = 0.0;
  double std_test_return = 0.0;
  double loss = 0.0;  // NaN before the first gradient step
  double epsilon = 0.0;
  std::uint64_t wall_ms = 0;

  friend bool operator==(const MetricsRow& a, const MetricsRow& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.step == b.step && a.episode == b.episode && same(a.mean_test_return, b.mean_test_return) &&
           same(a.std_test_return, b.std_test_return) && same(a.loss, b.loss) && same(a.epsilon, b.epsilon) && a.wall_ms == b.wall_ms;
  }
};

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string format_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.episode) + "," + format_double(r.mean_test_return) + "," +
         format_double(r.std_test_return) + "," + format_double(r.loss) + "," + format_double(r.epsilon) + "," + std::to_string(r.wall_ms);
}

inline json row_to_json(const MetricsRow& r) {
  return {{"step", r.step}, {"episode", r.episode}, {"mean", r.mean_test_return}, {"std", r.std_test_return},
          {"loss", std::isnan(r.loss) ? json(nullptr) : json(r.loss)}, {"epsilon", r.epsilon}, {"wall_ms", r.wall_ms}};
}

inline MetricsRow row_from_json(const json& j) {
  MetricsRow r;
  r.step = j.at("step").get<std::size_t>();
  r.episode = j.at("episode").get<std::size_t>();
  r.mean_test_return = j.at("mean").get<double>();
  r.std_test_return = j.at("std").get<double>();
  r.loss = j.at("loss").is_null() ? std::nan("") : j.at("loss").get<double>();
  r.epsilon = j.at("epsilon").get<double>();
  r.wall_ms = j.at("wall_ms").get<std::uint64_t>();
  return r;
}

inline std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ArgumentError("cannot read " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != kMetricsHeader) throw ArgumentError(path.string() + ": unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ArgumentError(path.string() + ": malformed row '" + line + "'");
    MetricsRow r;
    r.step = std::stoull(cells[0]);
    r.episode = std::stoull(cells[1]);
    r.mean_test_return = std::stod(cells[2]);
    r.std_test_return = std::stod(cells[3]);
    r.loss = std::stod(cells[4]);
    r.epsilon = std::stod(cells[5]);
    r.wall_ms = std::stoull(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

inline void write_metrics(const fs::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ArgumentError("cannot write " + path.string());
  f << kMetricsHeader << '\n';
  for (const auto& r : rows) f << format_row(r) << '\n';
}

// ---------------------------------------------------------------------------
// Running.

struct RunOptions {
  std::optional<fs::path> resume;  // checkpoint directory to continue from
  std::ostream* log = &std::cerr;
};

inline fs::path run_dir(const ExperimentConfig& c) { return fs::path(c.out) / c.name; }
inline fs::path seed_dir(const ExperimentConfig& c, std::uint64_t seed) { return run_dir(c) / ("seed" + std::to_string(seed)); }

namespace detail {

// Keys that may differ between a checkpoint's run and the resuming run.
inline nlohmann::json comparable(const json& cfg) {
  nlohmann::json j = nlohmann::json::parse(cfg.dump());
  for (const char* k : {"name", "out", "seeds", "checkpoint_every", "steps", "wall_clock"}) j.erase(k);
  return j;
}

}  // namespace detail

/// Trains one seed to completion, writing metrics.csv and checkpoints into
/// the seed directory.
inline void run_seed(const ExperimentConfig& c, std::uint64_t seed, const RunOptions& opt = {}) {
  using clock = std::chrono::steady_clock;
  const fs::path dir = seed_dir(c, seed);
  fs::create_directories(dir);
  const models::ModelConfig mcfg = c.model_config();
  const train::TrainConfig tcfg = c.train_config();
  const env::EnvConfig ecfg = c.env_config();

  train::TrainerState st = train::make_trainer(mcfg, tcfg, ecfg, seed);
  std::vector<MetricsRow> rows;
  std::size_t evals = 0, last_eval_step = 0, next_checkpoint = c.checkpoint_every;
  std::uint64_t wall_offset = 0;
  const auto started = clock::now();
  auto wall_ms = [&]() -> std::uint64_t {
    if (!c.wall_clock) return 0;
    return wall_offset + static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - started).count());
  };
  auto bookkeeping = [&]() {
    json r = json::array();
    for (const auto& row : rows) r.push_back(row_to_json(row));
    return nlohmann::json{{"config", nlohmann::json::parse(to_json(c).dump())}, {"rows", nlohmann::json::parse(r.dump())},
                          {"evals", evals}, {"last_eval_step", last_eval_step}, {"next_checkpoint", next_checkpoint}, {"wall_ms", wall_ms()}};
  };
  auto run_eval = [&]() {
    Rng rng = train::eval_rng(seed, evals++);
    const train::EvalResult ev = train::evaluate(mcfg, st.online, ecfg, tcfg.eval_episodes, rng);
    rows.push_back({st.t_env, st.episodes, ev.mean, ev.std, st.last_loss, train::epsilon_at(st.t_env, tcfg), wall_ms()});
    last_eval_step = st.t_env;
    write_metrics(dir / "metrics.csv", rows);
    *opt.log << c.name << " seed " << seed << " step " << st.t_env << " return " << ev.mean << " loss " << format_double(st.last_loss)
             << std::endl;
  };

  if (opt.resume) {
    const nlohmann::json extra = ckpt::load_trainer(*opt.resume, st);
    const json saved = json::parse(extra.at("config").dump());
    if (detail::comparable(saved) != detail::comparable(to_json(c)))
      throw ConfigError("checkpoint " + opt.resume->string() + " was written by a different configuration");
    for (const auto& r : extra.at("rows")) rows.push_back(row_from_json(r));
    evals = extra.at("evals").get<std::size_t>();
    last_eval_step = extra.at("last_eval_step").get<std::size_t>();
    next_checkpoint = extra.at("next_checkpoint").get<std::size_t>();
    wall_offset = c.wall_clock ? extra.at("wall_ms").get<std::uint64_t>() : 0;
    write_metrics(dir / "metrics.csv", rows);
  } else {
    run_eval();
  }

  env::PredatorPrey env(ecfg);
  while (st.t_env < tcfg.total_env_steps) {
    train::train_iteration(st, env);
    if (st.t_env - last_eval_step >= tcfg.eval_interval_steps) run_eval();
    if (c.checkpoint_every > 0 && st.t_env >= next_checkpoint && st.t_env < tcfg.total_env_steps) {
      while (next_checkpoint <= st.t_env) next_checkpoint += c.checkpoint_every;
      ckpt::save_trainer(dir / "checkpoints" / ("step" + std::to_string(st.t_env)), st, bookkeeping());
    }
  }
  if (last_eval_step != st.t_env) run_eval();
  ckpt::save_trainer(dir / "checkpoint", st, bookkeeping());
}

/// Runs every seed; a failing seed is logged and the others continue.
/// Returns 0 when all seeds completed.
inline int run_experiment(const ExperimentConfig& c, const RunOptions& opt = {}) {
  validate(c);
  fs::create_directories(run_dir(c));
  {
    std::ofstream f(run_dir(c) / "config.json", std::ios::trunc);
    f << to_json(c).dump(2) << '\n';
  }
  std::vector<std::uint64_t> seeds = c.seeds;
  if (opt.resume) {
    const auto state = nlohmann::json::parse(ckpt::detail::read_file(*opt.resume / "state.json"));
    const auto s = state.at("seed").get<std::uint64_t>();
    if (std::find(seeds.begin(), seeds.end(), s) == seeds.end())
      throw ConfigError("checkpoint seed " + std::to_string(s) + " is not among the configured seeds");
    seeds = {s};
  }
  int failures = 0;
  for (std::uint64_t seed : seeds) {
    try {
      run_seed(c, seed, opt);
    } catch (const std::exception& e) {
      ++failures;
      *opt.log << c.name << " seed " << seed << " failed: " << e.what() << std::endl;
    }
  }
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// Plot data.

inline constexpr std::size_t kPlotBins = 100;
inline constexpr const char* kPlotHeader = "algorithm,bin,step,mean,stderr,n_seeds";

struct PlotRow {
  std::string algorithm;
  std::size_t bin = 0;
  double step = 0.0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n_seeds = 0;
};

/// Per-seed curve on kPlotBins equal bins over [0, steps]: the mean test
/// return of the evaluations inside each bin, empty bins carrying the
/// previous value forward (leading empty bins take the first filled value).
inline std::vector<double> bin_curve(const std::vector<MetricsRow>& rows, std::size_t steps) {
  if (rows.empty()) throw ArgumentError("bin_curve: run has no evaluations");
  std::vector<double> sum(kPlotBins, 0.0);
  std::vector<std::size_t> cnt(kPlotBins, 0);
  for (const auto& r : rows) {
    std::size_t b = steps == 0 ? kPlotBins - 1 : static_cast<std::size_t>(static_cast<double>(r.step) * kPlotBins / static_cast<double>(steps));
    b = std::min(b, kPlotBins - 1);
    sum[b] += r.mean_test_return;
    ++cnt[b];
  }
  std::vector<double> out(kPlotBins);
  std::optional<double> carry;
  for (std::size_t b = 0; b < kPlotBins; ++b) {
    if (cnt[b]) carry = sum[b] / static_cast<double>(cnt[b]);
    out[b] = carry.value_or(std::nan(""));
  }
  std::size_t first = 0;
  while (cnt[first] == 0) ++first;
  for (std::size_t b = 0; b < first; ++b) out[b] = out[first];
  return out;
}

/// Aggregates run directories (each holding config.json and seed*/metrics.csv)
/// into mean and standard error per (algorithm, bin). The algorithm label is
/// the run name; runs sharing a label must share the same step budget.
inline std::vector<PlotRow> export_plot_data(const std::vector<fs::path>& run_dirs) {
  if (run_dirs.empty()) throw ArgumentError("export needs at least one run directory");
  std::map<std::string, std::pair<std::size_t, std::vector<std::vector<double>>>> groups;
  std::vector<std::string> order;
  for (const auto& d : run_dirs) {
    std::ifstream f(d / "config.json");
    if (!f) throw ArgumentError("no config.json in " + d.string());
    ExperimentConfig c;
    apply_json(c, json::parse(f));
    std::vector<fs::path> seeds;
    for (const auto& entry : fs::directory_iterator(d))
      if (entry.is_directory() && entry.path().filename().string().rfind("seed", 0) == 0 && fs::exists(entry.path() / "metrics.csv"))
        seeds.push_back(entry.path());
    std::sort(seeds.begin(), seeds.end());
    if (seeds.empty()) throw ArgumentError("no completed seed runs in " + d.string());
    auto [it, fresh] = groups.try_emplace(c.name, c.steps, std::vector<std::vector<double>>{});
    if (fresh) order.push_back(c.name);
    if (it->second.first != c.steps)
      throw AlignmentError("runs labelled '" + c.name + "' use different step budgets (" + std::to_string(it->second.first) + " vs " +
                           std::to_string(c.steps) + ")");
    for (const auto& s : seeds) it->second.second.push_back(bin_curve(read_metrics(s / "metrics.csv"), c.steps));
  }
  std::vector<PlotRow> out;
  for (const auto& name : order) {
    const auto& [steps, curves] = groups.at(name);
    const double n = static_cast<double>(curves.size());
    for (std::size_t b = 0; b < kPlotBins; ++b) {
      double mean = 0.0;
      for (const auto& c : curves) mean += c[b];
      mean /= n;
      double var = 0.0;
      for (const auto& c : curves) var += (c[b] - mean) * (c[b] - mean);
      const double se = curves.size() > 1 ? std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
      const double width = static_cast<double>(steps) / kPlotBins;
      out.push_back({name, b, (static_cast<double>(b) + 0.5) * width, mean, se, curves.size()});
    }
  }
  return out;
}

inline void write_plot_data(std::ostream& os, const std::vector<PlotRow>& rows) {
  os << kPlotHeader << '\n';
  for (const auto& r : rows)
    os << r.algorithm << ',' << r.bin << ',' << format_double(r.step) << ',' << format_double(r.mean) << ',' << format_double(r.stderr_)
       << ',' << r.n_seeds << '\n';
}

}  // namespace dcg::cli
