#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vex/config.hpp"
#include "vex/dynamics.hpp"
#include "vex/env.hpp"
#include "vex/expansion.hpp"
#include "vex/metrics.hpp"
#include "vex/replay.hpp"
#include "vex/sac.hpp"

namespace vex {

template <typename T>
struct TrainResult {
  RunMetrics metrics;
  Agent<T> agent;
  std::optional<EnsembleModel<T>> model;
  std::string expansion_dump;  // populated when dump_expansion_step fires
};

/// Deterministic evaluation: `episodes` parallel episodes driven by the
/// distribution mean action; returns (mean, population std) of the episode
/// returns, accumulated in double regardless of the training dtype.
template <typename T>
std::pair<double, double> evaluate_policy(const EnvSpec& spec, const Agent<T>& agent,
                                          int episodes, Rng& eval_rng) {
  EnvBatch<T> env = reset<T>(spec, episodes, eval_rng);
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
  Mat<T> next;
  Vec<T> rewards;
  for (int t = 0; t < spec.episode_len; ++t) {
    const Mat<T> actions = mean_action(agent, env.obs);
    step_physics(spec, env.obs, actions, next, rewards);
    env.obs.swap(next);
    for (int b = 0; b < episodes; ++b)
      returns[static_cast<std::size_t>(b)] += static_cast<double>(rewards(b));
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= episodes;
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  return {mean, std::sqrt(var / episodes)};
}

/// One fully deterministic training run: collect with the live policy
/// (uniform random during warmup), store to replay, and per environment step
/// run one SAC update whose critic targets come from the configured rollout
/// source. MVE refits the ensemble on schedule. Every consumer of
/// randomness draws from its own named stream, so the evaluation grid and
/// environment noise are identical across algorithms and horizons.
template <typename T>
TrainResult<T> run_training(const TrainConfig& cfg_in, int seed) {
  const TrainConfig cfg = cfg_in.canonical();
  cfg.validate();
  const EnvSpec spec = cfg.env_spec();
  const auto useed = static_cast<std::uint64_t>(seed);

  Rng init_rng(useed, Stream::init);
  Rng env_rng(useed, Stream::env);
  Rng behavior_rng(useed, Stream::behavior);
  Rng batch_rng(useed, Stream::batch);
  Rng target_action_rng(useed, Stream::target_actions);
  Rng target_noise_rng(useed, Stream::target_noise);
  Rng actor_rng(useed, Stream::actor);
  Rng temperature_rng(useed, Stream::temperature);
  Rng eval_rng(useed, Stream::eval);
  Rng model_fit_rng(useed, Stream::model_fit);

  TrainResult<T> result{RunMetrics{}, Agent<T>::make(spec.state_dim, spec.action_dim,
                                                     cfg.sac, init_rng),
                        std::nullopt, {}};
  Agent<T>& agent = result.agent;
  result.metrics.seed = seed;

  if (cfg.algo == Algo::mve) {
    Rng model_init_rng(useed, Stream::model_init);
    result.model =
        EnsembleModel<T>::make(spec.state_dim, spec.action_dim, cfg.model, model_init_rng);
  }
  const RolloutSource<T> source = cfg.algo == Algo::mve
                                      ? make_model_source(*result.model, agent)
                                      : make_oracle_source(spec, agent);
  ExpansionConfig ecfg;
  ecfg.horizon = cfg.horizon;
  ecfg.horizon_max = cfg.horizon_max;
  ecfg.bootstrap = cfg.bootstrap;
  const BootstrapQ<T> boot_q = make_bootstrap_q(agent, cfg.bootstrap);
  const T gamma = static_cast<T>(cfg.sac.gamma);

  ReplayBuffer<T> buffer(static_cast<std::size_t>(cfg.buffer_capacity), spec.state_dim,
                         spec.action_dim);
  EnvBatch<T> env = reset<T>(spec, 1, env_rng);

  {
    auto [mean, sd] = evaluate_policy(spec, agent, cfg.eval_episodes, eval_rng);
    result.metrics.evals.push_back({0, mean, sd});
  }

  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    Mat<T> action;
    if (step <= cfg.warmup_steps)
      action = behavior_rng.template uniform_mat<T>(1, spec.action_dim, -1.0, 1.0);
    else
      action = sample_action(agent, env.obs, behavior_rng).actions;
    const Vec<T> prev_obs = env.obs.row(0).transpose();
    const Vec<T> reward = step_episode(spec, env, action);
    Transition<T> tr;
    tr.state = prev_obs;
    tr.action = action.row(0).transpose();
    tr.reward = reward(0);
    tr.next_state = env.obs.row(0).transpose();
    tr.done = env.done[0] != 0;
    tr.truncated = tr.done;  // time-limit-only episodes
    buffer.push(tr);
    if (env.done[0]) env = reset<T>(spec, 1, env_rng);

    if (step > cfg.warmup_steps) {
      for (int u = 0; u < cfg.updates_per_step; ++u) {
        try {
          const TransitionBatch<T> batch = buffer.sample(cfg.sac.batch_size, batch_rng);
          const RolloutBatch<T> rollout =
              source(batch.next_states, cfg.horizon, target_action_rng, target_noise_rng);
          const Vec<T> targets = critic_target_from_rollout(
              batch, rollout, boot_q, agent.alpha(), gamma, cfg.horizon);
          if (step == cfg.dump_expansion_step && u == 0 && result.expansion_dump.empty())
            result.expansion_dump =
                expansion_debug_csv(rollout, agent.alpha(), gamma, cfg.horizon);
          const T closs = critic_update(agent, batch, targets);
          const auto [aloss, entropy] = actor_update(agent, batch.states, actor_rng);
          const T tloss = temperature_update(agent, batch.states, temperature_rng);
          target_update(agent, cfg.sac.tau);
          result.metrics.diags.push_back({step, static_cast<double>(closs),
                                          static_cast<double>(aloss),
                                          static_cast<double>(tloss),
                                          static_cast<double>(agent.alpha()),
                                          static_cast<double>(entropy)});
        } catch (const NumericError& e) {
          throw NumericError("run aborted at env step " + std::to_string(step) + ": " +
                             e.what());
        }
      }
    }

    if (result.model && step >= cfg.warmup_steps &&
        step % cfg.model.refit_interval == 0) {
      const ModelFitReport report =
          train_model(*result.model, buffer, cfg.model.epochs, model_fit_rng);
      if (!report.skipped)
        result.metrics.model_fits.push_back({step, report.holdout_nll});
    }

    if (step % cfg.eval_interval == 0) {
      auto [mean, sd] = evaluate_policy(spec, agent, cfg.eval_episodes, eval_rng);
      result.metrics.evals.push_back({step, mean, sd});
    }
  }
  result.metrics.validate();
  return result;
}

}  // namespace vex
