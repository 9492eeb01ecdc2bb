#pragma once

#include <cstdlib>
#include <filesystem>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "vex/checkpoint.hpp"
#include "vex/config.hpp"
#include "vex/metrics.hpp"
#include "vex/train.hpp"

namespace vex {

/// Training runs use 32-bit floats; the test suites exercise the same code
/// paths in 64-bit.
using TrainReal = float;

struct ExperimentResult {
  TrainConfig cfg;  // canonical form
  std::vector<RunMetrics> runs;
  SeedSummary summary;
  std::vector<double> thresholds;
  std::vector<ThresholdAggregate> threshold_aggs;
};

inline std::string output_root() {
  const char* root = std::getenv("VEX_OUTPUT_ROOT");
  return root ? std::string(root) : std::string();
}

/// Resolves an output directory against VEX_OUTPUT_ROOT for relative paths.
inline std::string resolve_out_dir(const std::string& dir) {
  if (dir.empty()) return dir;
  const std::string root = output_root();
  std::filesystem::path p(dir);
  if (!root.empty() && p.is_relative()) p = std::filesystem::path(root) / p;
  return p.string();
}

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir + ": " + ec.message());
}

}  // namespace detail

/// Writes one run's files under <dir>/seed_<k>/.
template <typename T>
void write_run_outputs(const TrainConfig& cfg, const TrainResult<T>& result,
                       const std::string& dir) {
  const std::string run_dir = dir + "/seed_" + std::to_string(result.metrics.seed);
  detail::ensure_dir(run_dir);
  write_text_file(run_dir + "/metrics.csv", metrics_csv(result.metrics));
  if (cfg.write_diagnostics)
    write_text_file(run_dir + "/diagnostics.csv", diagnostics_csv(result.metrics));
  if (result.model) {
    write_text_file(run_dir + "/model.csv", model_csv(result.metrics, cfg.model.members));
    save_model(run_dir + "/model.ckpt", *result.model);
  }
  if (!result.expansion_dump.empty())
    write_text_file(run_dir + "/expansion_dump.csv", result.expansion_dump);
  save_agent(run_dir + "/agent.ckpt", result.agent);
}

/// Trains every seed of one configuration (in parallel waves of cfg.jobs)
/// and, when cfg.out_dir is set, writes curves.csv, thresholds.csv,
/// config.json and the per-seed files.
inline ExperimentResult run_experiment(const TrainConfig& cfg_in) {
  TrainConfig cfg = cfg_in.canonical();
  cfg.out_dir = resolve_out_dir(cfg.out_dir);
  cfg.validate();

  ExperimentResult result;
  result.cfg = cfg;
  result.runs.resize(cfg.seeds.size());

  int jobs = cfg.jobs > 0 ? cfg.jobs : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;

  std::vector<TrainResult<TrainReal>> trained(cfg.seeds.size());
  for (std::size_t base = 0; base < cfg.seeds.size(); base += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<TrainResult<TrainReal>>> wave;
    const std::size_t end = std::min(cfg.seeds.size(), base + static_cast<std::size_t>(jobs));
    for (std::size_t i = base; i < end; ++i)
      wave.push_back(std::async(std::launch::async, [&cfg, i] {
        return run_training<TrainReal>(cfg, cfg.seeds[i]);
      }));
    for (std::size_t i = base; i < end; ++i) trained[i] = wave[i - base].get();
  }

  for (std::size_t i = 0; i < trained.size(); ++i) result.runs[i] = trained[i].metrics;
  result.summary = aggregate_seeds(result.runs);
  result.thresholds = threshold_levels(cfg.thresholds);
  result.threshold_aggs = aggregate_thresholds(result.runs, result.thresholds);

  if (!cfg.out_dir.empty()) {
    detail::ensure_dir(cfg.out_dir);
    for (const auto& t : trained) write_run_outputs(cfg, t, cfg.out_dir);
    write_text_file(cfg.out_dir + "/curves.csv", curves_csv(result.summary));
    write_text_file(cfg.out_dir + "/thresholds.csv",
                    thresholds_csv_header() +
                        thresholds_csv_rows(cfg.horizon, result.threshold_aggs));
    nlohmann::json echo = cfg;
    echo["requested_algo"] = algo_name(cfg_in.algo);
    write_text_file(cfg.out_dir + "/config.json", echo.dump(2) + "\n");
  }
  return result;
}

/// Horizon sweep: one experiment per horizon under <out>/h<H>/, plus a
/// combined thresholds.csv and config echo at the top level.
inline std::vector<ExperimentResult> run_sweep(const TrainConfig& base,
                                               const std::vector<int>& horizons) {
  if (horizons.empty()) throw ConfigError("sweep: need at least one horizon");
  const std::string out = resolve_out_dir(base.out_dir);
  std::vector<ExperimentResult> results;
  std::string thresholds_rows;
  for (int h : horizons) {
    TrainConfig cfg = base;
    cfg.horizon = h;
    if (h == 0) cfg.algo = Algo::sac;
    if (!out.empty()) cfg.out_dir = out + "/h" + std::to_string(h);
    ExperimentResult r = run_experiment(cfg);
    thresholds_rows += thresholds_csv_rows(h, r.threshold_aggs);
    results.push_back(std::move(r));
  }
  if (!out.empty()) {
    detail::ensure_dir(out);
    write_text_file(out + "/thresholds.csv", thresholds_csv_header() + thresholds_rows);
    nlohmann::json echo = base.canonical();
    echo["out_dir"] = out;
    echo["sweep_horizons"] = horizons;
    write_text_file(out + "/config.json", echo.dump(2) + "\n");
  }
  return results;
}

}  // namespace vex
