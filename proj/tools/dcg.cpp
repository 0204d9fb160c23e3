// Command-line front end: train runs and export plot data.
//
//   dcg --algo dcg --topology full --env pp-coop --p -2 --seed 0 --seed 1 --steps 200000
//   dcg --config exp.json --resume runs/exp/seed0/checkpoints/step100000
//   dcg export runs/dcg runs/vdn -o curves.csv

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcg/cli.hpp"

namespace {

using dcg::cli::json;

int run_export(const std::vector<std::string>& dirs, const std::string& out) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  const auto rows = dcg::cli::export_plot_data(paths);
  if (out.empty() || out == "-") {
    dcg::cli::write_plot_data(std::cout, rows);
  } else {
    std::ofstream f(out);
    if (!f) throw dcg::ArgumentError("cannot write " + out);
    dcg::cli::write_plot_data(f, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train coordination-graph value learners on predator-prey tasks"};
  app.set_help_all_flag("--help-all");

  std::optional<std::string> config_file, algo, topology, env, out, name, resume;
  std::optional<std::size_t> rank, steps, k_passes, checkpoint_every;
  std::optional<double> p;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> sets;
  bool no_msg_norm = false, nps = false;

  app.add_option("--config", config_file, "flat JSON configuration file");
  app.add_option("--algo", algo, "dcg, dcg-s, vdn, iql or lrq");
  app.add_option("--topology", topology, "full, cycle, line, star or empty");
  app.add_option("--rank", rank, "payoff rank K (0 = full payoff matrices)");
  app.add_option("--env", env, "pp-coop or pp-ghost");
  app.add_option("--p", p, "miscoordination punishment (<= 0)");
  app.add_option("--seed", seeds, "run seed (repeatable)");
  app.add_option("--steps", steps, "training environment steps per seed");
  app.add_option("--k-passes", k_passes, "max-plus message passes");
  app.add_flag("--no-msg-norm", no_msg_norm, "disable message normalization");
  app.add_flag("--nps", nps, "separate parameters per agent and per edge");
  app.add_option("--out", out, "output root directory");
  app.add_option("--name", name, "run name (subdirectory of --out)");
  app.add_option("--checkpoint-every", checkpoint_every, "env steps between checkpoints (0 = final only)");
  app.add_option("--resume", resume, "checkpoint directory to continue from");
  app.add_option("--set", sets, "override any configuration key, KEY=JSON (repeatable)");

  auto* exp = app.add_subcommand("export", "aggregate run directories into binned plot data");
  std::vector<std::string> export_dirs;
  std::string export_out;
  exp->add_option("dirs", export_dirs, "run directories (<out>/<name>)")->required();
  exp->add_option("-o,--output", export_out, "output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (exp->parsed()) return run_export(export_dirs, export_out);

    json flags = json::object();
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw dcg::ConfigError("--set expects KEY=JSON, got '" + kv + "'");
      const std::string value = kv.substr(eq + 1);
      json v = json::parse(value, nullptr, false);
      flags[kv.substr(0, eq)] = v.is_discarded() ? json(value) : v;
    }
    if (algo) flags["algo"] = *algo;
    if (topology) flags["topology"] = *topology;
    if (rank) flags["rank"] = *rank;
    if (env) flags["env"] = *env;
    if (p) flags["p"] = *p;
    if (!seeds.empty()) flags["seeds"] = seeds;
    if (steps) flags["steps"] = *steps;
    if (k_passes) flags["k_passes"] = *k_passes;
    if (no_msg_norm) flags["msg_norm"] = false;
    if (nps) flags["nps"] = true;
    if (out) flags["out"] = *out;
    if (name) flags["name"] = *name;
    if (checkpoint_every) flags["checkpoint_every"] = *checkpoint_every;

    std::optional<std::filesystem::path> file;
    if (config_file) file = *config_file;
    const dcg::cli::ExperimentConfig cfg = dcg::cli::parse_config(flags, file);
    dcg::cli::RunOptions opt;
    if (resume) opt.resume = *resume;
    return dcg::cli::run_experiment(cfg, opt);
  } catch (const dcg::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
