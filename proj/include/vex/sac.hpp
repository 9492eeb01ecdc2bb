#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "vex/adam.hpp"
#include "vex/common.hpp"
#include "vex/mlp.hpp"
#include "vex/replay.hpp"
#include "vex/rng.hpp"
#include "vex/rollout.hpp"
#include "vex/squashed_gaussian.hpp"

namespace vex {

enum class AlphaMode { learned, fixed };

/// Which networks back the bootstrap Q on the critic-target path.
/// twin_min_target is the default; single reproduces a literal single-Q
/// backup using the first target critic.
enum class BootstrapMode { twin_min_target, single };

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  AdamConfig actor_opt{};
  AdamConfig critic_opt{};
  AdamConfig alpha_opt{};
  double target_entropy = std::numeric_limits<double>::quiet_NaN();  // NaN -> -action_dim
  int batch_size = 256;
  AlphaMode alpha_mode = AlphaMode::learned;
  double init_alpha = 1.0;
  bool twin_critics = true;
  int hidden_units = 128;
  int hidden_layers = 2;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("sac: gamma must be in (0,1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac: tau must be in (0,1]");
    if (batch_size < 1) throw ConfigError("sac: batch_size must be >= 1");
    if (init_alpha <= 0.0) throw ConfigError("sac: init_alpha must be positive");
    if (hidden_units < 1 || hidden_layers < 1) throw ConfigError("sac: bad network size");
  }
};

/// Policy, twin critics, their targets, and the entropy temperature.
template <typename T>
struct Agent {
  SacConfig cfg;
  int obs_dim = 0;
  int act_dim = 0;
  MlpParams<T> policy, q1, q2, q1_target, q2_target;
  T log_alpha = 0;
  AdamState<T> policy_opt, q1_opt, q2_opt;
  AdamScalarState<T> alpha_opt;

  static Agent make(int obs_dim, int act_dim, const SacConfig& cfg, Rng& init_rng) {
    cfg.validate();
    Agent a;
    a.cfg = cfg;
    a.obs_dim = obs_dim;
    a.act_dim = act_dim;
    std::vector<int> pi_sizes{obs_dim};
    std::vector<int> q_sizes{obs_dim + act_dim};
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      pi_sizes.push_back(cfg.hidden_units);
      q_sizes.push_back(cfg.hidden_units);
    }
    pi_sizes.push_back(2 * act_dim);  // mean head ++ log-std head
    q_sizes.push_back(1);
    a.policy = make_mlp<T>(pi_sizes, Activation::relu, Activation::identity);
    a.q1 = make_mlp<T>(q_sizes, Activation::relu, Activation::identity);
    a.q2 = make_mlp<T>(q_sizes, Activation::relu, Activation::identity);
    init_glorot(a.policy, init_rng);
    init_glorot(a.q1, init_rng);
    init_glorot(a.q2, init_rng);
    a.q1_target = a.q1;
    a.q2_target = a.q2;
    a.log_alpha = static_cast<T>(std::log(cfg.init_alpha));
    a.policy_opt = AdamState<T>::like(a.policy);
    a.q1_opt = AdamState<T>::like(a.q1);
    a.q2_opt = AdamState<T>::like(a.q2);
    return a;
  }

  T alpha() const { return std::exp(log_alpha); }

  double target_entropy() const {
    return std::isnan(cfg.target_entropy) ? -static_cast<double>(act_dim)
                                          : cfg.target_entropy;
  }

  std::string fingerprint() const {
    std::string fp = "sac|obs" + std::to_string(obs_dim) + "|act" + std::to_string(act_dim);
    fp += "|policy:" + policy.shape_string();
    fp += "|q:" + q1.shape_string();
    fp += std::string("|twin:") + (cfg.twin_critics ? "1" : "0");
    fp += std::string("|dtype:") + (sizeof(T) == 4 ? "f32" : "f64");
    return fp;
  }
};

template <typename T>
struct PolicyForward {
  Mat<T> mean;         // [B x m]
  Mat<T> raw_log_std;  // [B x m], pre-clamp head output
  Mat<T> log_std;      // clamped
  MlpCache<T> cache;
};

template <typename T>
PolicyForward<T> policy_forward(const Agent<T>& agent, const Mat<T>& obs) {
  PolicyForward<T> pf;
  const Mat<T> head = mlp_forward(agent.policy, obs, &pf.cache);
  pf.mean = head.leftCols(agent.act_dim);
  pf.raw_log_std = head.rightCols(agent.act_dim);
  pf.log_std = clamp_log_std(pf.raw_log_std);
  return pf;
}

template <typename T>
SampledActions<T> sample_action(const Agent<T>& agent, const Mat<T>& obs, Rng& rng) {
  const PolicyForward<T> pf = policy_forward(agent, obs);
  const Mat<T> noise = rng.template normal_mat<T>(obs.rows(), agent.act_dim);
  SquashedGaussian<T> dist{pf.mean, pf.log_std};
  SquashedSample<T> s = sample_log_prob(dist, noise);
  return {std::move(s.action), std::move(s.log_prob)};
}

/// Deterministic evaluation action: tanh of the distribution mean.
template <typename T>
Mat<T> mean_action(const Agent<T>& agent, const Mat<T>& obs) {
  return policy_forward(agent, obs).mean.array().tanh();
}

/// Sampler bound to the agent's current policy parameters. The agent must
/// outlive the sampler (rollout sources hold it only within one update).
template <typename T>
PolicySampler<T> make_policy_sampler(const Agent<T>& agent) {
  return [&agent](const Mat<T>& states, Rng& rng) { return sample_action(agent, states, rng); };
}

/// Bootstrap Q evaluator over the target critics (or a single one).
template <typename T>
std::function<Vec<T>(const Mat<T>&, const Mat<T>&)> make_bootstrap_q(const Agent<T>& agent,
                                                                     BootstrapMode mode) {
  return [&agent, mode](const Mat<T>& s, const Mat<T>& a) -> Vec<T> {
    const Mat<T> x = concat_columns(s, a);
    Vec<T> q1 = mlp_forward(agent.q1_target, x).col(0);
    if (mode == BootstrapMode::single || !agent.cfg.twin_critics) return q1;
    const Vec<T> q2 = mlp_forward(agent.q2_target, x).col(0);
    return q1.cwiseMin(q2);
  };
}

namespace detail {

template <typename T>
struct ActorEval {
  T loss;
  T entropy;
  MlpParams<T> grads;  // empty when gradients were not requested
};

template <typename T>
ActorEval<T> actor_eval(const Agent<T>& agent, const Mat<T>& states, Rng& rng,
                        bool want_grads) {
  const Eigen::Index B = states.rows();
  const T alpha = agent.alpha();
  PolicyForward<T> pf = policy_forward(agent, states);
  const Mat<T> noise = rng.template normal_mat<T>(B, agent.act_dim);
  SquashedSample<T> smp = sample_log_prob(SquashedGaussian<T>{pf.mean, pf.log_std}, noise);

  const Mat<T> x = concat_columns(states, smp.action);
  MlpCache<T> c1, c2;
  const Vec<T> q1 = mlp_forward(agent.q1, x, &c1).col(0);
  Vec<T> qmin = q1;
  Vec<T> q2;
  if (agent.cfg.twin_critics) {
    q2 = mlp_forward(agent.q2, x, &c2).col(0);
    qmin = q1.cwiseMin(q2);
  }
  if (!all_finite(qmin) || !all_finite(smp.log_prob))
    throw NumericError("actor_loss: non-finite network output");

  ActorEval<T> out;
  out.loss = (alpha * smp.log_prob - qmin).mean();
  out.entropy = -smp.log_prob.mean();
  if (!want_grads) return out;

  const T invB = T(1) / static_cast<T>(B);
  // d(loss)/d(action) through the selected critic's input gradient.
  Mat<T> d_action = Mat<T>::Zero(B, agent.act_dim);
  MlpParams<T> scratch;  // critic parameter grads, discarded
  {
    Mat<T> dq1 = Mat<T>::Zero(B, 1);
    for (Eigen::Index b = 0; b < B; ++b)
      if (!agent.cfg.twin_critics || q1(b) <= q2(b)) dq1(b, 0) = -invB;
    Mat<T> dx1;
    mlp_backward(agent.q1, c1, dq1, scratch, &dx1);
    d_action += dx1.rightCols(agent.act_dim);
  }
  if (agent.cfg.twin_critics) {
    Mat<T> dq2 = Mat<T>::Zero(B, 1);
    for (Eigen::Index b = 0; b < B; ++b)
      if (q2(b) < q1(b)) dq2(b, 0) = -invB;
    Mat<T> dx2;
    MlpParams<T> scratch2;
    mlp_backward(agent.q2, c2, dq2, scratch2, &dx2);
    d_action += dx2.rightCols(agent.act_dim);
  }

  // Chain rule through a = tanh(u), u = mean + exp(log_std) * noise, and the
  // direct -log_std term of the log-density:
  //   d(logp)/du = 2a, d(logp)/d(log_std) = -1 + 2a*std*noise (via u),
  //   da/du = 1 - a^2.
  const Mat<T> std = pf.log_std.array().exp();
  const Mat<T> one_minus_a2 = (T(1) - smp.action.array().square()).matrix();
  Mat<T> d_u = (alpha * invB) * T(2) * smp.action + d_action.cwiseProduct(one_minus_a2);
  Mat<T> d_mean = d_u;
  Mat<T> d_log_std =
      (d_u.cwiseProduct(std.cwiseProduct(noise)).array() - alpha * invB).matrix();
  // Hard clamp: no gradient where the raw head output left [min, max].
  const auto open_gate = (pf.raw_log_std.array() > static_cast<T>(kLogStdMin)) &&
                         (pf.raw_log_std.array() < static_cast<T>(kLogStdMax));
  d_log_std.array() *= open_gate.template cast<T>();

  Mat<T> d_head(B, 2 * agent.act_dim);
  d_head.leftCols(agent.act_dim) = d_mean;
  d_head.rightCols(agent.act_dim) = d_log_std;
  mlp_backward(agent.policy, pf.cache, d_head, out.grads);
  return out;
}

template <typename T>
struct CriticEval {
  T loss;
  MlpParams<T> grads1, grads2;
};

template <typename T>
CriticEval<T> critic_eval(const Agent<T>& agent, const TransitionBatch<T>& batch,
                          const Vec<T>& targets, bool want_grads) {
  const Eigen::Index B = batch.size();
  if (targets.size() != B) throw ConfigError("critic_loss: target size mismatch");
  if (!all_finite(targets)) throw NumericError("critic_loss: non-finite targets");
  const Mat<T> x = concat_columns(batch.states, batch.actions);
  MlpCache<T> c1, c2;
  const Vec<T> q1 = mlp_forward(agent.q1, x, &c1).col(0);
  const Vec<T> r1 = q1 - targets;
  CriticEval<T> out;
  if (agent.cfg.twin_critics) {
    const Vec<T> q2 = mlp_forward(agent.q2, x, &c2).col(0);
    const Vec<T> r2 = q2 - targets;
    out.loss = (r1.squaredNorm() + r2.squaredNorm()) / (T(4) * static_cast<T>(B));
    if (want_grads) {
      mlp_backward(agent.q1, c1, Mat<T>(r1 / (T(2) * static_cast<T>(B))), out.grads1);
      mlp_backward(agent.q2, c2, Mat<T>(r2 / (T(2) * static_cast<T>(B))), out.grads2);
    }
  } else {
    out.loss = r1.squaredNorm() / (T(2) * static_cast<T>(B));
    if (want_grads) mlp_backward(agent.q1, c1, Mat<T>(r1 / static_cast<T>(B)), out.grads1);
  }
  if (!std::isfinite(static_cast<double>(out.loss)))
    throw NumericError("critic_loss: non-finite loss");
  return out;
}

}  // namespace detail

/// Actor loss: mean over the batch of alpha * log pi(a|s) - min_i Q_i(s, a)
/// with a freshly reparameterization-sampled. Also returns the mean entropy
/// estimate. Gradients (in the update variant) flow to the policy only.
template <typename T>
std::pair<T, T> actor_loss(const Agent<T>& agent, const Mat<T>& states, Rng& rng) {
  auto e = detail::actor_eval(agent, states, rng, false);
  return {e.loss, e.entropy};
}

template <typename T>
std::pair<T, T> actor_update(Agent<T>& agent, const Mat<T>& states, Rng& rng) {
  auto e = detail::actor_eval(agent, states, rng, true);
  adam_step(agent.policy, e.grads, agent.policy_opt, agent.cfg.actor_opt);
  return {e.loss, e.entropy};
}

/// Critic loss: mean over batch and critics of (target - Q)^2 / 2. Targets
/// are precomputed constants; no gradient reaches the target path.
template <typename T>
T critic_loss(const Agent<T>& agent, const TransitionBatch<T>& batch, const Vec<T>& targets) {
  return detail::critic_eval(agent, batch, targets, false).loss;
}

template <typename T>
T critic_update(Agent<T>& agent, const TransitionBatch<T>& batch, const Vec<T>& targets) {
  auto e = detail::critic_eval(agent, batch, targets, true);
  adam_step(agent.q1, e.grads1, agent.q1_opt, agent.cfg.critic_opt);
  if (agent.cfg.twin_critics) adam_step(agent.q2, e.grads2, agent.q2_opt, agent.cfg.critic_opt);
  return e.loss;
}

/// Temperature loss: -log_alpha * mean(log pi + target_entropy) on freshly
/// sampled actions; the gradient touches log_alpha only. In fixed mode the
/// operation is skipped entirely.
template <typename T>
T temperature_loss(const Agent<T>& agent, const Mat<T>& states, Rng& rng) {
  const SampledActions<T> s = sample_action(agent, states, rng);
  const T drift = s.log_prob.mean() + static_cast<T>(agent.target_entropy());
  return -agent.log_alpha * drift;
}

template <typename T>
T temperature_update(Agent<T>& agent, const Mat<T>& states, Rng& rng) {
  if (agent.cfg.alpha_mode == AlphaMode::fixed) return T(0);
  const SampledActions<T> s = sample_action(agent, states, rng);
  const T drift = s.log_prob.mean() + static_cast<T>(agent.target_entropy());
  const T loss = -agent.log_alpha * drift;
  adam_step_scalar(agent.log_alpha, -drift, agent.alpha_opt, agent.cfg.alpha_opt);
  return loss;
}

/// Polyak averaging: target <- (1 - tau) * target + tau * online.
template <typename T>
void target_update(Agent<T>& agent, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("target_update: tau must be in (0,1]");
  const T t = static_cast<T>(tau);
  auto blend = [t](MlpParams<T>& tgt, const MlpParams<T>& src) {
    for (std::size_t l = 0; l < tgt.layers.size(); ++l) {
      tgt.layers[l].weight = (T(1) - t) * tgt.layers[l].weight + t * src.layers[l].weight;
      tgt.layers[l].bias = (T(1) - t) * tgt.layers[l].bias + t * src.layers[l].bias;
    }
  };
  blend(agent.q1_target, agent.q1);
  blend(agent.q2_target, agent.q2);
}

}  // namespace vex
