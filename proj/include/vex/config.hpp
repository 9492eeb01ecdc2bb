#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vex/common.hpp"
#include "vex/dynamics.hpp"
#include "vex/env.hpp"
#include "vex/sac.hpp"

namespace vex {

enum class Algo { sac, mve, ove };

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::sac: return "sac";
    case Algo::mve: return "mve";
    default: return "ove";
  }
}

inline Algo algo_from_name(const std::string& s) {
  if (s == "sac") return Algo::sac;
  if (s == "mve") return Algo::mve;
  if (s == "ove") return Algo::ove;
  throw ConfigError("unknown algorithm: " + s + " (expected sac|mve|ove)");
}

/// Steps-to-threshold levels: `levels` values linearly spaced over
/// [min_reward, max_reward], both ends included.
struct ThresholdSpec {
  double min_reward = 0.0;
  double max_reward = 0.0;
  int levels = 5;
};

inline ThresholdSpec default_thresholds(EnvId id) {
  // Pendulum tops out at 180 on the 200-point return scale: a swing-up from
  // a random start always spends some of the 200-step budget below maximal
  // reward, so the theoretical maximum of 200 is not reachable and 180 acts
  // as the solve threshold. Cartpole's 400 sits well under its 500 ceiling.
  if (id == EnvId::pendulum) return {50.0, 180.0, 5};
  return {100.0, 400.0, 5};
}

/// Full description of one experiment: environment, algorithm, horizon,
/// seeds, budgets, and every module hyperparameter.
struct TrainConfig {
  std::string env = "pendulum";
  Algo algo = Algo::sac;
  int horizon = 0;
  int horizon_max = 30;
  std::vector<int> seeds = {0, 1, 2, 3, 4};
  std::int64_t total_steps = 30000;
  std::int64_t warmup_steps = 1000;
  int updates_per_step = 1;  // update-to-data ratio
  std::int64_t eval_interval = 1000;
  int eval_episodes = 10;
  std::int64_t buffer_capacity = 200000;
  SacConfig sac;
  ModelConfig model;
  BootstrapMode bootstrap = BootstrapMode::twin_min_target;
  ThresholdSpec thresholds;  // zero-initialized -> environment default
  std::string out_dir;
  bool write_diagnostics = true;
  int jobs = 0;  // 0 -> hardware concurrency
  std::int64_t dump_expansion_step = -1;  // optional target-decomposition dump
  nlohmann::json env_overrides;  // physical-constant overrides

  /// Resolves defaults and folds H = 0 runs onto plain SAC: sac, mve H=0 and
  /// ove H=0 are one and the same algorithm, so they share one code path.
  TrainConfig canonical() const {
    TrainConfig c = *this;
    if (c.horizon == 0) c.algo = Algo::sac;
    if (c.thresholds.max_reward <= c.thresholds.min_reward)
      c.thresholds = default_thresholds(EnvSpec::from_id(c.env).id);
    return c;
  }

  void validate() const {
    if (algo == Algo::sac && horizon != 0)
      throw ConfigError("config: algorithm sac requires horizon 0 (use mve/ove for H > 0)");
    if (horizon < 0 || horizon > horizon_max)
      throw ConfigError("config: horizon must lie in [0, " + std::to_string(horizon_max) + "]");
    if (total_steps < warmup_steps) throw ConfigError("config: total_steps < warmup_steps");
    if (warmup_steps < 1) throw ConfigError("config: warmup_steps must be >= 1");
    if (eval_interval < 1 || eval_episodes < 1) throw ConfigError("config: bad eval settings");
    if (updates_per_step < 1) throw ConfigError("config: updates_per_step must be >= 1");
    if (buffer_capacity < 1) throw ConfigError("config: buffer_capacity must be >= 1");
    if (seeds.empty()) throw ConfigError("config: need at least one seed");
    if (thresholds.levels < 2) throw ConfigError("config: need at least two threshold levels");
    sac.validate();
    model.validate();
    EnvSpec::from_id(env);
  }

  EnvSpec env_spec() const {
    EnvSpec spec = EnvSpec::from_id(env);
    if (env_overrides.is_object()) {
      auto get = [&](const char* key, double& field) {
        if (env_overrides.contains(key)) field = env_overrides.at(key).get<double>();
      };
      get("gravity", spec.gravity);
      get("dt", spec.dt);
      get("mass", spec.mass);
      get("length", spec.length);
      get("torque_limit", spec.torque_limit);
      get("max_speed", spec.max_speed);
      get("cart_mass", spec.cart_mass);
      get("pole_mass", spec.pole_mass);
      get("pole_len", spec.pole_len);
      get("force_limit", spec.force_limit);
      get("x_limit", spec.x_limit);
      get("reset_noise", spec.reset_noise);
      if (env_overrides.contains("substeps"))
        spec.substeps = env_overrides.at("substeps").get<int>();
      if (env_overrides.contains("episode_len"))
        spec.episode_len = env_overrides.at("episode_len").get<int>();
    }
    spec.validate();
    return spec;
  }
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

inline void from_json(const nlohmann::json& j, AdamConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
}

inline void to_json(nlohmann::json& j, const SacConfig& c) {
  j = {{"gamma", c.gamma},
       {"tau", c.tau},
       {"actor_opt", c.actor_opt},
       {"critic_opt", c.critic_opt},
       {"alpha_opt", c.alpha_opt},
       {"target_entropy", std::isnan(c.target_entropy)
                              ? nlohmann::json(nullptr)
                              : nlohmann::json(c.target_entropy)},
       {"batch_size", c.batch_size},
       {"alpha_mode", c.alpha_mode == AlphaMode::learned ? "learned" : "fixed"},
       {"init_alpha", c.init_alpha},
       {"twin_critics", c.twin_critics},
       {"hidden_units", c.hidden_units},
       {"hidden_layers", c.hidden_layers}};
}

inline void from_json(const nlohmann::json& j, SacConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  c.tau = j.value("tau", c.tau);
  if (j.contains("actor_opt")) j.at("actor_opt").get_to(c.actor_opt);
  if (j.contains("critic_opt")) j.at("critic_opt").get_to(c.critic_opt);
  if (j.contains("alpha_opt")) j.at("alpha_opt").get_to(c.alpha_opt);
  if (j.contains("target_entropy") && !j.at("target_entropy").is_null())
    c.target_entropy = j.at("target_entropy").get<double>();
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("alpha_mode")) {
    const auto mode = j.at("alpha_mode").get<std::string>();
    if (mode != "learned" && mode != "fixed") throw ConfigError("config: bad alpha_mode");
    c.alpha_mode = mode == "learned" ? AlphaMode::learned : AlphaMode::fixed;
  }
  c.init_alpha = j.value("init_alpha", c.init_alpha);
  c.twin_critics = j.value("twin_critics", c.twin_critics);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"members", c.members},
       {"hidden_units", c.hidden_units},
       {"hidden_layers", c.hidden_layers},
       {"opt", c.opt},
       {"bound_reg", c.bound_reg},
       {"refit_interval", c.refit_interval},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"holdout_frac", c.holdout_frac},
       {"min_fit", c.min_fit},
       {"max_batches_per_member", c.max_batches_per_member},
       {"member_resample",
        c.resample == MemberResample::per_step ? "per_step" : "per_trajectory"},
       {"max_logvar_init", c.max_logvar_init},
       {"min_logvar_init", c.min_logvar_init}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.members = j.value("members", c.members);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  if (j.contains("opt")) j.at("opt").get_to(c.opt);
  c.bound_reg = j.value("bound_reg", c.bound_reg);
  c.refit_interval = j.value("refit_interval", c.refit_interval);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.holdout_frac = j.value("holdout_frac", c.holdout_frac);
  c.min_fit = j.value("min_fit", c.min_fit);
  c.max_batches_per_member = j.value("max_batches_per_member", c.max_batches_per_member);
  if (j.contains("member_resample")) {
    const auto mode = j.at("member_resample").get<std::string>();
    if (mode != "per_step" && mode != "per_trajectory")
      throw ConfigError("config: bad member_resample");
    c.resample = mode == "per_step" ? MemberResample::per_step : MemberResample::per_trajectory;
  }
  c.max_logvar_init = j.value("max_logvar_init", c.max_logvar_init);
  c.min_logvar_init = j.value("min_logvar_init", c.min_logvar_init);
}

inline void to_json(nlohmann::json& j, const ThresholdSpec& t) {
  j = {{"min_reward", t.min_reward}, {"max_reward", t.max_reward}, {"levels", t.levels}};
}

inline void from_json(const nlohmann::json& j, ThresholdSpec& t) {
  t.min_reward = j.value("min_reward", t.min_reward);
  t.max_reward = j.value("max_reward", t.max_reward);
  t.levels = j.value("levels", t.levels);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"env", c.env},
       {"algo", algo_name(c.algo)},
       {"horizon", c.horizon},
       {"horizon_max", c.horizon_max},
       {"seeds", c.seeds},
       {"total_steps", c.total_steps},
       {"warmup_steps", c.warmup_steps},
       {"updates_per_step", c.updates_per_step},
       {"eval_interval", c.eval_interval},
       {"eval_episodes", c.eval_episodes},
       {"buffer_capacity", c.buffer_capacity},
       {"sac", c.sac},
       {"model", c.model},
       {"bootstrap", c.bootstrap == BootstrapMode::twin_min_target ? "twin_min_target" : "single"},
       {"thresholds", c.thresholds},
       {"out_dir", c.out_dir},
       {"write_diagnostics", c.write_diagnostics},
       {"jobs", c.jobs},
       {"dump_expansion_step", c.dump_expansion_step},
       {"env_overrides", c.env_overrides.is_null() ? nlohmann::json::object() : c.env_overrides}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.env = j.value("env", c.env);
  if (j.contains("algo")) c.algo = algo_from_name(j.at("algo").get<std::string>());
  c.horizon = j.value("horizon", c.horizon);
  c.horizon_max = j.value("horizon_max", c.horizon_max);
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.updates_per_step = j.value("updates_per_step", c.updates_per_step);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  if (j.contains("sac")) j.at("sac").get_to(c.sac);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("bootstrap")) {
    const auto mode = j.at("bootstrap").get<std::string>();
    if (mode != "twin_min_target" && mode != "single")
      throw ConfigError("config: bad bootstrap mode");
    c.bootstrap =
        mode == "twin_min_target" ? BootstrapMode::twin_min_target : BootstrapMode::single;
  }
  if (j.contains("thresholds")) j.at("thresholds").get_to(c.thresholds);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.write_diagnostics = j.value("write_diagnostics", c.write_diagnostics);
  c.jobs = j.value("jobs", c.jobs);
  c.dump_expansion_step = j.value("dump_expansion_step", c.dump_expansion_step);
  if (j.contains("env_overrides")) c.env_overrides = j.at("env_overrides");
}

}  // namespace vex
