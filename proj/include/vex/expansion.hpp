#pragma once

#include <functional>

#include "vex/common.hpp"
#include "vex/dynamics.hpp"
#include "vex/env.hpp"
#include "vex/replay.hpp"
#include "vex/rng.hpp"
#include "vex/rollout.hpp"
#include "vex/sac.hpp"

namespace vex {

struct ExpansionConfig {
  int horizon = 0;
  int horizon_max = 30;
  BootstrapMode bootstrap = BootstrapMode::twin_min_target;

  void validate() const {
    if (horizon < 0) throw ConfigError("expansion: horizon must be >= 0");
    if (horizon > horizon_max)
      throw ConfigError("expansion: horizon exceeds configured bound of " +
                        std::to_string(horizon_max));
  }
};

/// Produces an H-step RolloutBatch from a batch of start states. H = 0 asks
/// only for the bootstrap sample at the start states themselves.
template <typename T>
using RolloutSource = std::function<RolloutBatch<T>(const Mat<T>& starts, int horizon,
                                                    Rng& action_rng, Rng& noise_rng)>;

template <typename T>
using BootstrapQ = std::function<Vec<T>(const Mat<T>&, const Mat<T>&)>;

/// Soft H-step value of each rollout's start state:
///
///   V[b] = sum_{t<H} g^t m[b,t] (r[b,t] - alpha lp[b,t])
///        + g^K (Q(s[b,K], a[b,K]) - alpha lp[b,K]),   K = #live steps
///
/// Masked-out steps contribute nothing and move the bootstrap to the last
/// live step. With H = 0 the sum is empty and V reduces to the standard
/// one-sample soft value Q(s, a) - alpha log pi(a|s). The result carries no
/// gradient information.
template <typename T>
Vec<T> expand_value(const RolloutBatch<T>& rollout, const BootstrapQ<T>& q_fn, T alpha,
                    T gamma, int horizon) {
  if (horizon < 0 || horizon > rollout.horizon())
    throw ConfigError("expand_value: horizon exceeds rollout length");
  const Eigen::Index B = rollout.batch();

  // Per-element count of live steps; bootstrap is taken there.
  std::vector<int> live(static_cast<std::size_t>(B), horizon);
  for (Eigen::Index b = 0; b < B; ++b) {
    int k = 0;
    while (k < horizon && rollout.masks(b, k) > T(0)) ++k;
    live[static_cast<std::size_t>(b)] = k;
  }

  Mat<T> boot_states(B, rollout.states.front().cols());
  Mat<T> boot_actions(B, rollout.actions.front().cols());
  Vec<T> boot_logp(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const int k = live[static_cast<std::size_t>(b)];
    boot_states.row(b) = rollout.states[static_cast<std::size_t>(k)].row(b);
    boot_actions.row(b) = rollout.actions[static_cast<std::size_t>(k)].row(b);
    boot_logp(b) = rollout.log_probs(b, k);
  }
  const Vec<T> boot_q = q_fn(boot_states, boot_actions);
  if (boot_q.size() != B) throw ConfigError("expand_value: bootstrap Q size mismatch");

  Vec<T> value(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const int k = live[static_cast<std::size_t>(b)];
    T v = T(0);
    T disc = T(1);
    for (int t = 0; t < k; ++t) {
      v += disc * (rollout.rewards(b, t) - alpha * rollout.log_probs(b, t));
      disc *= gamma;
    }
    v += disc * (boot_q(b) - alpha * boot_logp(b));
    value(b) = v;
  }
  return value;
}

/// Critic target for each real transition:
///   target = r + gamma * (1 - terminal) * V^H(s'),
/// with the H-step expansion started at s'. Episodes here end only by time
/// limit, so `terminal` (done and not truncated) stays 0 and bootstrapping
/// continues through truncation.
template <typename T>
Vec<T> critic_target_from_rollout(const TransitionBatch<T>& batch,
                                  const RolloutBatch<T>& rollout, const BootstrapQ<T>& q_fn,
                                  T alpha, T gamma, int horizon) {
  const Vec<T> v = expand_value(rollout, q_fn, alpha, gamma, horizon);
  return batch.rewards.array() +
         gamma * (T(1) - batch.terminal.array()) * v.array();
}

template <typename T>
Vec<T> critic_target(const TransitionBatch<T>& batch, const RolloutSource<T>& source,
                     const Agent<T>& agent, const ExpansionConfig& cfg, Rng& action_rng,
                     Rng& noise_rng) {
  cfg.validate();
  const RolloutBatch<T> rollout =
      source(batch.next_states, cfg.horizon, action_rng, noise_rng);
  const BootstrapQ<T> q_fn = make_bootstrap_q(agent, cfg.bootstrap);
  return critic_target_from_rollout(batch, rollout, q_fn, agent.alpha(),
                                    static_cast<T>(agent.cfg.gamma), cfg.horizon);
}

/// Degenerate H = 0 rollout: just the start states and one policy sample.
template <typename T>
RolloutBatch<T> bootstrap_only_rollout(const Mat<T>& starts, const PolicySampler<T>& policy,
                                       Rng& action_rng) {
  RolloutBatch<T> rb;
  const Eigen::Index B = starts.rows();
  SampledActions<T> sa = policy(starts, action_rng);
  rb.states.push_back(starts);
  rb.actions.push_back(std::move(sa.actions));
  rb.log_probs.resize(B, 1);
  rb.log_probs.col(0) = sa.log_prob;
  rb.rewards.resize(B, 0);
  rb.masks.resize(B, 0);
  return rb;
}

/// Rollout source backed by the true dynamics (oracle value expansion).
/// For H = 0 no dynamics call happens; only the bootstrap action is drawn.
template <typename T>
RolloutSource<T> make_oracle_source(const EnvSpec& spec, const Agent<T>& agent) {
  return [&spec, &agent](const Mat<T>& starts, int horizon, Rng& action_rng,
                         Rng& /*noise*/) -> RolloutBatch<T> {
    const PolicySampler<T> sampler = make_policy_sampler(agent);
    if (horizon == 0) return bootstrap_only_rollout(starts, sampler, action_rng);
    return oracle_rollout(spec, starts, sampler, horizon, action_rng);
  };
}

/// Rollout source backed by the learned ensemble (value expansion with a
/// learned model).
template <typename T>
RolloutSource<T> make_model_source(const EnsembleModel<T>& model, const Agent<T>& agent) {
  return [&model, &agent](const Mat<T>& starts, int horizon, Rng& action_rng,
                          Rng& noise_rng) -> RolloutBatch<T> {
    const PolicySampler<T> sampler = make_policy_sampler(agent);
    if (horizon == 0) return bootstrap_only_rollout(starts, sampler, action_rng);
    return model_rollout(model, starts, sampler, horizon, action_rng, noise_rng);
  };
}

/// Per-step decomposition of one expansion, for debugging target values.
/// Columns: element, step, mask, reward, log_prob, discounted contribution.
template <typename T>
std::string expansion_debug_csv(const RolloutBatch<T>& rollout, T alpha, T gamma,
                                int horizon) {
  std::string out = "element,step,mask,reward,log_prob,contribution\n";
  for (Eigen::Index b = 0; b < rollout.batch(); ++b) {
    T disc = T(1);
    for (int t = 0; t < horizon; ++t) {
      const T m = rollout.masks(b, t);
      const T contrib = disc * m * (rollout.rewards(b, t) - alpha * rollout.log_probs(b, t));
      out += format_number(static_cast<std::int64_t>(b)) + "," + std::to_string(t) + "," +
             format_number(m) + "," + format_number(rollout.rewards(b, t)) + "," +
             format_number(rollout.log_probs(b, t)) + "," + format_number(contrib) + "\n";
      disc *= gamma;
    }
  }
  return out;
}

}  // namespace vex
