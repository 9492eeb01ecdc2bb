#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vex/common.hpp"
#include "vex/config.hpp"

namespace vex {

struct EvalPoint {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
};

struct UpdateDiag {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
};

struct ModelFitPoint {
  std::int64_t step = 0;
  std::vector<double> holdout_nll;  // per member
};

/// Everything one training run records.
struct RunMetrics {
  int seed = 0;
  std::vector<EvalPoint> evals;
  std::vector<UpdateDiag> diags;
  std::vector<ModelFitPoint> model_fits;

  void validate() const {
    for (std::size_t i = 1; i < evals.size(); ++i)
      if (evals[i].step <= evals[i - 1].step)
        throw ConfigError("metrics: eval steps must be strictly increasing");
  }
};

inline std::vector<double> threshold_levels(const ThresholdSpec& spec) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(spec.levels));
  for (int k = 0; k < spec.levels; ++k)
    out.push_back(spec.min_reward +
                  (spec.max_reward - spec.min_reward) * k / (spec.levels - 1));
  return out;
}

/// Environment steps until the run first reaches each threshold (the step of
/// the first evaluation whose mean episode reward is >= the threshold), or
/// nullopt if it never does. Thresholds must be sorted ascending.
inline std::vector<std::optional<std::int64_t>> steps_to_threshold(
    const RunMetrics& metrics, const std::vector<double>& thresholds) {
  if (metrics.evals.empty()) throw ConfigError("steps_to_threshold: no evaluations");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1])
      throw ConfigError("steps_to_threshold: thresholds must be sorted ascending");
  std::vector<std::optional<std::int64_t>> out(thresholds.size());
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    for (const auto& e : metrics.evals) {
      if (e.mean_reward >= thresholds[k]) {
        out[k] = e.step;
        break;
      }
    }
  }
  return out;
}

/// Cross-seed aggregation on a shared evaluation grid.
struct SeedSummary {
  std::vector<int> seeds;
  std::vector<std::int64_t> steps;
  std::vector<std::vector<double>> rewards;  // [seed][eval]
  std::vector<double> mean, stddev;          // population std across seeds
};

inline SeedSummary aggregate_seeds(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw ConfigError("aggregate_seeds: no runs");
  SeedSummary s;
  for (const auto& e : runs.front().evals) s.steps.push_back(e.step);
  for (const auto& r : runs) {
    if (r.evals.size() != s.steps.size())
      throw ConfigError("aggregate_seeds: misaligned evaluation grids");
    std::vector<double> row;
    for (std::size_t i = 0; i < r.evals.size(); ++i) {
      if (r.evals[i].step != s.steps[i])
        throw ConfigError("aggregate_seeds: misaligned evaluation grids");
      row.push_back(r.evals[i].mean_reward);
    }
    s.rewards.push_back(std::move(row));
    s.seeds.push_back(r.seed);
  }
  const auto n = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    double m = 0.0;
    for (const auto& row : s.rewards) m += row[i];
    m /= n;
    double v = 0.0;
    for (const auto& row : s.rewards) v += (row[i] - m) * (row[i] - m);
    s.mean.push_back(m);
    s.stddev.push_back(std::sqrt(v / n));
  }
  return s;
}

/// Per-threshold aggregate: mean first-reach step among the seeds that
/// reached it, plus how many did.
struct ThresholdAggregate {
  double threshold = 0.0;
  std::optional<double> mean_steps;
  int reached = 0;
  int total = 0;
};

inline std::vector<ThresholdAggregate> aggregate_thresholds(
    const std::vector<RunMetrics>& runs, const std::vector<double>& thresholds) {
  std::vector<ThresholdAggregate> out;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    ThresholdAggregate agg;
    agg.threshold = thresholds[k];
    agg.total = static_cast<int>(runs.size());
    double sum = 0.0;
    for (const auto& r : runs) {
      const auto reach = steps_to_threshold(r, thresholds)[k];
      if (reach) {
        sum += static_cast<double>(*reach);
        ++agg.reached;
      }
    }
    if (agg.reached > 0) agg.mean_steps = sum / agg.reached;
    out.push_back(agg);
  }
  return out;
}

// ---- CSV I/O ----------------------------------------------------------
// All numbers are written in shortest round-trip form, so reading a file
// back reproduces the original values exactly.

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << content;
  if (!f) throw IoError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// curves.csv: one row per evaluation step with per-seed rewards and the
/// cross-seed mean and population standard deviation.
/// Header: step,seed_<k>...,mean,std
inline std::string curves_csv(const SeedSummary& s) {
  std::string out = "step";
  for (int seed : s.seeds) out += ",seed_" + std::to_string(seed);
  out += ",mean,std\n";
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    out += format_number(s.steps[i]);
    for (const auto& row : s.rewards) out += "," + format_number(row[i]);
    out += "," + format_number(s.mean[i]) + "," + format_number(s.stddev[i]) + "\n";
  }
  return out;
}

inline SeedSummary parse_curves_csv(const std::string& text) {
  SeedSummary s;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("curves.csv: empty");
  std::istringstream hs(line);
  std::string col;
  std::vector<std::string> cols;
  while (std::getline(hs, col, ',')) cols.push_back(col);
  if (cols.size() < 4 || cols.front() != "step" || cols[cols.size() - 2] != "mean" ||
      cols.back() != "std")
    throw IoError("curves.csv: unexpected header");
  for (std::size_t c = 1; c + 2 < cols.size(); ++c) {
    if (cols[c].rfind("seed_", 0) != 0) throw IoError("curves.csv: unexpected column " + cols[c]);
    s.seeds.push_back(std::stoi(cols[c].substr(5)));
    s.rewards.emplace_back();
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::getline(ls, cell, ',');
    s.steps.push_back(std::stoll(cell));
    for (auto& row : s.rewards) {
      std::getline(ls, cell, ',');
      row.push_back(std::stod(cell));
    }
    std::getline(ls, cell, ',');
    s.mean.push_back(std::stod(cell));
    std::getline(ls, cell, ',');
    s.stddev.push_back(std::stod(cell));
  }
  return s;
}

/// metrics.csv: per-run evaluation curve.
inline std::string metrics_csv(const RunMetrics& m) {
  std::string out = "step,mean_reward,std_reward\n";
  for (const auto& e : m.evals)
    out += format_number(e.step) + "," + format_number(e.mean_reward) + "," +
           format_number(e.std_reward) + "\n";
  return out;
}

inline std::vector<EvalPoint> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "step,mean_reward,std_reward")
    throw IoError("metrics.csv: unexpected header");
  std::vector<EvalPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    EvalPoint e;
    std::getline(ls, cell, ',');
    e.step = std::stoll(cell);
    std::getline(ls, cell, ',');
    e.mean_reward = std::stod(cell);
    std::getline(ls, cell, ',');
    e.std_reward = std::stod(cell);
    out.push_back(e);
  }
  return out;
}

/// diagnostics.csv: per-update losses and temperature.
inline std::string diagnostics_csv(const RunMetrics& m) {
  std::string out = "step,critic_loss,actor_loss,alpha_loss,alpha,entropy\n";
  for (const auto& d : m.diags)
    out += format_number(d.step) + "," + format_number(d.critic_loss) + "," +
           format_number(d.actor_loss) + "," + format_number(d.alpha_loss) + "," +
           format_number(d.alpha) + "," + format_number(d.entropy) + "\n";
  return out;
}

/// model.csv: per-refit holdout NLL of each ensemble member.
inline std::string model_csv(const RunMetrics& m, int members) {
  std::string out = "step";
  for (int k = 0; k < members; ++k) out += ",member_" + std::to_string(k);
  out += "\n";
  for (const auto& f : m.model_fits) {
    out += format_number(f.step);
    for (double v : f.holdout_nll) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

/// thresholds.csv rows for one horizon.
/// Header: horizon,threshold,mean_steps,reached,seeds
inline std::string thresholds_csv_rows(int horizon,
                                       const std::vector<ThresholdAggregate>& aggs) {
  std::string out;
  for (const auto& a : aggs) {
    out += std::to_string(horizon) + "," + format_number(a.threshold) + ",";
    if (a.mean_steps) out += format_number(*a.mean_steps);
    out += "," + std::to_string(a.reached) + "," + std::to_string(a.total) + "\n";
  }
  return out;
}

inline std::string thresholds_csv_header() {
  return "horizon,threshold,mean_steps,reached,seeds\n";
}

}  // namespace vex
