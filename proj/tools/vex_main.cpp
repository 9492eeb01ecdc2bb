// Command-line front end: train / sweep / plot / thresholds.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "vex/harness.hpp"
#include "vex/plot.hpp"
#include "vex/vex.hpp"

namespace {

// "0..4" (inclusive range) or "0,2,5" or a single number.
std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  const auto range = text.find("..");
  if (range != std::string::npos) {
    const int lo = std::stoi(text.substr(0, range));
    const int hi = std::stoi(text.substr(range + 2));
    if (hi < lo) throw vex::ConfigError("bad range: " + text);
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    out.push_back(std::stoi(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (out.empty()) throw vex::ConfigError("empty list: " + text);
  return out;
}

struct CommonFlags {
  std::string config_file;
  std::string env, algo, seeds, out;
  std::int64_t steps = -1, warmup = -1, eval_interval = -1;
  int horizon = -1, eval_episodes = -1, jobs = -1;
  bool no_diagnostics = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config file (flags override it)");
  cmd->add_option("--env", f.env, "environment id: pendulum | cartpole_swingup");
  cmd->add_option("--algo", f.algo, "algorithm: sac | mve | ove");
  cmd->add_option("--seeds", f.seeds, "seed list: 0..4 or 0,1,2");
  cmd->add_option("--steps", f.steps, "total environment steps per run");
  cmd->add_option("--warmup", f.warmup, "uniform-random warmup steps");
  cmd->add_option("--eval-interval", f.eval_interval, "steps between evaluations");
  cmd->add_option("--eval-episodes", f.eval_episodes, "episodes per evaluation");
  cmd->add_option("--jobs", f.jobs, "parallel runs (0 = hardware)");
  cmd->add_option("--out", f.out, "output directory (VEX_OUTPUT_ROOT prefixes relative paths)");
  cmd->add_flag("--no-diagnostics", f.no_diagnostics, "skip per-update diagnostics.csv");
}

vex::TrainConfig build_config(const CommonFlags& f, int horizon_flag) {
  vex::TrainConfig cfg;
  if (!f.config_file.empty())
    cfg = nlohmann::json::parse(vex::read_text_file(f.config_file)).get<vex::TrainConfig>();
  if (!f.env.empty()) cfg.env = f.env;
  if (!f.algo.empty()) cfg.algo = vex::algo_from_name(f.algo);
  if (horizon_flag >= 0) cfg.horizon = horizon_flag;
  if (!f.seeds.empty()) cfg.seeds = parse_int_list(f.seeds);
  if (f.steps >= 0) cfg.total_steps = f.steps;
  if (f.warmup >= 0) cfg.warmup_steps = f.warmup;
  if (f.eval_interval >= 0) cfg.eval_interval = f.eval_interval;
  if (f.eval_episodes >= 0) cfg.eval_episodes = f.eval_episodes;
  if (f.jobs >= 0) cfg.jobs = f.jobs;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.no_diagnostics) cfg.write_diagnostics = false;
  return cfg;
}

void print_experiment(const vex::ExperimentResult& r) {
  std::printf("env=%s algo=%s H=%d seeds=%zu\n", r.cfg.env.c_str(),
              vex::algo_name(r.cfg.algo), r.cfg.horizon, r.cfg.seeds.size());
  const auto& s = r.summary;
  if (!s.steps.empty())
    std::printf("  final eval: step %lld mean %.2f std %.2f\n",
                static_cast<long long>(s.steps.back()), s.mean.back(), s.stddev.back());
  for (const auto& a : r.threshold_aggs) {
    if (a.mean_steps)
      std::printf("  threshold %8.1f: reached by %d/%d seeds, mean %0.0f steps\n",
                  a.threshold, a.reached, a.total, *a.mean_steps);
    else
      std::printf("  threshold %8.1f: reached by %d/%d seeds\n", a.threshold, a.reached,
                  a.total);
  }
  if (!r.cfg.out_dir.empty()) std::printf("  wrote %s\n", r.cfg.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"value-expansion reinforcement learning (SAC / MVE / OVE)"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  int train_horizon = -1;
  auto* train_cmd = app.add_subcommand("train", "train one (algo, horizon) configuration");
  add_common(train_cmd, train_flags);
  train_cmd->add_option("--horizon", train_horizon, "rollout horizon H (0 = plain SAC)");

  CommonFlags sweep_flags;
  std::string sweep_horizons = "0,1,3,5,10";
  auto* sweep_cmd = app.add_subcommand("sweep", "train a set of horizons");
  add_common(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--horizons", sweep_horizons, "horizon list, e.g. 0,1,3,5,10");

  std::string plot_in, plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "render curves.csv files to SVG");
  plot_cmd->add_option("--in", plot_in, "experiment or sweep directory")->required();
  plot_cmd->add_option("--out", plot_out, "output image (default <in>/plot.svg)");

  std::string thr_in;
  auto* thr_cmd = app.add_subcommand("thresholds", "recompute steps-to-threshold tables");
  thr_cmd->add_option("--in", thr_in, "experiment or sweep directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      vex::TrainConfig cfg = build_config(train_flags, train_horizon);
      if (cfg.algo != vex::Algo::sac && train_horizon < 0 && cfg.horizon == 0)
        throw vex::ConfigError("mve/ove need --horizon >= 1 (H=0 is plain sac)");
      print_experiment(vex::run_experiment(cfg));
    } else if (sweep_cmd->parsed()) {
      vex::TrainConfig cfg = build_config(sweep_flags, -1);
      if (cfg.algo == vex::Algo::sac) cfg.algo = vex::Algo::ove;
      for (const auto& r : vex::run_sweep(cfg, parse_int_list(sweep_horizons)))
        print_experiment(r);
    } else if (plot_cmd->parsed()) {
      const std::string in = vex::resolve_out_dir(plot_in);
      const std::string out = plot_out.empty() ? in + "/plot.svg" : vex::resolve_out_dir(plot_out);
      vex::plot_directory(in, out);
      std::printf("wrote %s\n", out.c_str());
    } else if (thr_cmd->parsed()) {
      namespace fs = std::filesystem;
      const std::string in = vex::resolve_out_dir(thr_in);
      std::string rows;
      auto handle = [&rows](const fs::path& dir) {
        if (!fs::exists(dir / "config.json")) return;
        const auto j = nlohmann::json::parse(vex::read_text_file((dir / "config.json").string()));
        vex::TrainConfig cfg = j.get<vex::TrainConfig>();
        std::vector<vex::RunMetrics> runs;
        for (int seed : cfg.seeds) {
          const auto path = dir / ("seed_" + std::to_string(seed)) / "metrics.csv";
          if (!fs::exists(path)) continue;
          vex::RunMetrics m;
          m.seed = seed;
          m.evals = vex::parse_metrics_csv(vex::read_text_file(path.string()));
          runs.push_back(std::move(m));
        }
        if (runs.empty()) return;
        const auto levels = vex::threshold_levels(cfg.thresholds);
        rows += vex::thresholds_csv_rows(cfg.horizon,
                                         vex::aggregate_thresholds(runs, levels));
      };
      handle(in);
      if (fs::exists(in))
        for (const auto& entry : fs::directory_iterator(in))
          if (entry.is_directory()) handle(entry.path());
      if (rows.empty()) throw vex::IoError("thresholds: no run metrics found under " + in);
      const std::string table = vex::thresholds_csv_header() + rows;
      vex::write_text_file(in + "/thresholds.csv", table);
      std::fputs(table.c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
