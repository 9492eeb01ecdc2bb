#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vex/common.hpp"
#include "vex/rng.hpp"
#include "vex/rollout.hpp"

namespace vex {

enum class EnvId { pendulum, cartpole_swingup };

/// Static description of a batched environment: dimensions, episode
/// structure, physical constants, and the reward definition.
///
/// Both tasks are contact-free swing-up problems integrated with
/// semi-implicit Euler (velocities first, then positions) and have
/// time-limit-only episodes: `done` always means truncation, never a
/// terminal state, so value bootstrapping continues through episode ends.
///
/// Pendulum (state [cos th, sin th, om], th = 0 upright):
///   th_dd = 3*g/(2*len) * sin(th) + 3/(mass*len^2) * torque
///   torque = action * torque_limit, om clamped to [-max_speed, max_speed]
///   reward = 1 - cost / cost_max, cost = wrap(th)^2 + 0.1*om^2 + 0.001*torque^2
///   cost_max = pi^2 + 0.1*max_speed^2 + 0.001*torque_limit^2, so the
///   per-step reward lies in [0, 1] with maximum 1 at the upright rest state
///   and the 200-step episode return lies in [0, 200].
///
/// Cartpole swing-up (state [x, xd, cos th, sin th, om], th = 0 upright):
///   tmp   = (force + pole_mass*pole_len*om^2*sin(th)) / total_mass
///   th_dd = (g*sin(th) - cos(th)*tmp)
///           / (pole_len * (4/3 - pole_mass*cos(th)^2/total_mass))
///   x_dd  = tmp - pole_mass*pole_len*th_dd*cos(th)/total_mass
///   force = action * force_limit; the cart stops dead at |x| = x_limit
///   reward = (1+cos th)/2 * (1 - 0.1*(x/x_limit)^2) * (1 - 0.01*action^2)
///   in [0, 1], maximum 1 upright and centered with zero force; 500-step
///   episodes give returns in [0, 500].
struct EnvSpec {
  EnvId id = EnvId::pendulum;
  int state_dim = 3;
  int action_dim = 1;
  int episode_len = 200;
  double dt = 0.05;
  int substeps = 1;
  double gravity = 9.81;

  // pendulum
  double mass = 1.0;
  double length = 1.0;
  double torque_limit = 2.0;
  double max_speed = 8.0;

  // cartpole
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_len = 0.5;  // half-length
  double force_limit = 10.0;
  double x_limit = 2.4;
  double reset_noise = 0.05;

  static EnvSpec pendulum() { return EnvSpec{}; }

  static EnvSpec cartpole_swingup() {
    EnvSpec s;
    s.id = EnvId::cartpole_swingup;
    s.state_dim = 5;
    s.episode_len = 500;
    s.dt = 0.02;
    s.substeps = 4;
    s.max_speed = 30.0;
    return s;
  }

  static EnvSpec from_id(const std::string& name) {
    if (name == "pendulum") return pendulum();
    if (name == "cartpole_swingup") return cartpole_swingup();
    throw ConfigError("unknown environment id: " + name);
  }

  std::string name() const {
    return id == EnvId::pendulum ? "pendulum" : "cartpole_swingup";
  }

  double pendulum_cost_max() const {
    return M_PI * M_PI + 0.1 * max_speed * max_speed + 0.001 * torque_limit * torque_limit;
  }

  void validate() const {
    if (dt <= 0) throw ConfigError("env: dt must be positive");
    if (substeps < 1) throw ConfigError("env: substeps must be >= 1");
    if (episode_len < 1) throw ConfigError("env: episode_len must be >= 1");
    if (torque_limit <= 0 || force_limit <= 0) throw ConfigError("env: action limit must be positive");
  }
};

/// Batched environment state. The observation matrix is the physical state;
/// step_index/done track episode bookkeeping (time-limit truncation only).
template <typename T>
struct EnvBatch {
  Mat<T> obs;                        // [B x n]
  std::vector<std::int64_t> step_index;
  std::vector<std::uint8_t> done;

  Eigen::Index size() const { return obs.rows(); }
};

template <typename T>
T wrap_angle(T th) {
  // into (-pi, pi]
  th = std::fmod(th + static_cast<T>(M_PI), static_cast<T>(2 * M_PI));
  if (th < T(0)) th += static_cast<T>(2 * M_PI);
  return th - static_cast<T>(M_PI);
}

namespace detail {

template <typename T>
void pendulum_row(const EnvSpec& spec, const T* in, T a, T* out, T& reward) {
  // in/out are dense [cos th, sin th, om] triples.
  const T g = static_cast<T>(spec.gravity), len = static_cast<T>(spec.length);
  const T mass = static_cast<T>(spec.mass);
  const T torque = std::clamp(a, T(-1), T(1)) * static_cast<T>(spec.torque_limit);
  T th = std::atan2(in[1], in[0]);
  T om = in[2];

  const T cost = wrap_angle(th) * wrap_angle(th) + T(0.1) * om * om + T(0.001) * torque * torque;
  reward = T(1) - cost / static_cast<T>(spec.pendulum_cost_max());

  const T h = static_cast<T>(spec.dt) / static_cast<T>(spec.substeps);
  for (int k = 0; k < spec.substeps; ++k) {
    const T th_dd = T(3) * g / (T(2) * len) * std::sin(th) +
                    T(3) / (mass * len * len) * torque;
    om += th_dd * h;
    om = std::clamp(om, static_cast<T>(-spec.max_speed), static_cast<T>(spec.max_speed));
    th += om * h;
  }
  out[0] = std::cos(th);
  out[1] = std::sin(th);
  out[2] = om;
}

template <typename T>
void cartpole_row(const EnvSpec& spec, const T* in, T a, T* out, T& reward) {
  const T g = static_cast<T>(spec.gravity);
  const T mc = static_cast<T>(spec.cart_mass), mp = static_cast<T>(spec.pole_mass);
  const T lp = static_cast<T>(spec.pole_len);
  const T total = mc + mp;
  const T act = std::clamp(a, T(-1), T(1));
  const T force = act * static_cast<T>(spec.force_limit);
  T x = in[0], xd = in[1];
  T th = std::atan2(in[3], in[2]);
  T om = in[4];

  const T xs = x / static_cast<T>(spec.x_limit);
  reward = (T(1) + std::cos(th)) / T(2) * (T(1) - T(0.1) * xs * xs) *
           (T(1) - T(0.01) * act * act);

  const T h = static_cast<T>(spec.dt) / static_cast<T>(spec.substeps);
  for (int k = 0; k < spec.substeps; ++k) {
    const T sth = std::sin(th), cth = std::cos(th);
    const T tmp = (force + mp * lp * om * om * sth) / total;
    const T th_dd = (g * sth - cth * tmp) / (lp * (T(4) / T(3) - mp * cth * cth / total));
    const T x_dd = tmp - mp * lp * th_dd * cth / total;
    om += th_dd * h;
    om = std::clamp(om, static_cast<T>(-spec.max_speed), static_cast<T>(spec.max_speed));
    th += om * h;
    xd += x_dd * h;
    x += xd * h;
    if (x > static_cast<T>(spec.x_limit)) { x = static_cast<T>(spec.x_limit); xd = T(0); }
    if (x < static_cast<T>(-spec.x_limit)) { x = static_cast<T>(-spec.x_limit); xd = T(0); }
  }
  out[0] = x;
  out[1] = xd;
  out[2] = std::cos(th);
  out[3] = std::sin(th);
  out[4] = om;
}

}  // namespace detail

/// Initial-state distribution. Pendulum: th ~ U(-pi, pi), om ~ U(-1, 1).
/// Cartpole: pole hanging down, all coordinates perturbed by U(-noise, noise).
template <typename T>
EnvBatch<T> reset(const EnvSpec& spec, Eigen::Index batch, Rng& rng) {
  if (batch < 1) throw ConfigError("reset: batch must be >= 1");
  EnvBatch<T> st;
  st.obs = Mat<T>(batch, spec.state_dim);
  st.step_index.assign(static_cast<std::size_t>(batch), 0);
  st.done.assign(static_cast<std::size_t>(batch), 0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (spec.id == EnvId::pendulum) {
      const T th = static_cast<T>(rng.uniform(-M_PI, M_PI));
      const T om = static_cast<T>(rng.uniform(-1.0, 1.0));
      st.obs(b, 0) = std::cos(th);
      st.obs(b, 1) = std::sin(th);
      st.obs(b, 2) = om;
    } else {
      const T noise = static_cast<T>(spec.reset_noise);
      const T x = static_cast<T>(rng.uniform(-noise, noise));
      const T xd = static_cast<T>(rng.uniform(-noise, noise));
      const T th = static_cast<T>(M_PI) + static_cast<T>(rng.uniform(-noise, noise));
      const T om = static_cast<T>(rng.uniform(-noise, noise));
      st.obs(b, 0) = x;
      st.obs(b, 1) = xd;
      st.obs(b, 2) = std::cos(th);
      st.obs(b, 3) = std::sin(th);
      st.obs(b, 4) = om;
    }
  }
  return st;
}

/// Pure dynamics step on raw states: no episode bookkeeping. Batch elements
/// are processed independently (element i of the result depends only on row
/// i of the inputs). Rewards are computed from the pre-step state and the
/// applied action.
template <typename T>
void step_physics(const EnvSpec& spec, const Mat<T>& obs, const Mat<T>& actions,
                  Mat<T>& next_obs, Vec<T>& rewards) {
  if (obs.cols() != spec.state_dim) throw ConfigError("step: state width mismatch");
  if (actions.rows() != obs.rows() || actions.cols() != spec.action_dim)
    throw ConfigError("step: action shape mismatch");
  if (!all_finite(actions)) throw InputError("step: non-finite action");
  next_obs.resize(obs.rows(), obs.cols());
  rewards.resize(obs.rows());
  T in[8], out[8];
  for (Eigen::Index b = 0; b < obs.rows(); ++b) {
    for (Eigen::Index j = 0; j < obs.cols(); ++j) in[j] = obs(b, j);
    T r;
    if (spec.id == EnvId::pendulum)
      detail::pendulum_row(spec, in, actions(b, 0), out, r);
    else
      detail::cartpole_row(spec, in, actions(b, 0), out, r);
    for (Eigen::Index j = 0; j < obs.cols(); ++j) next_obs(b, j) = out[j];
    rewards(b) = r;
  }
}

/// Episode step: physics plus step counting and time-limit truncation.
/// Returns per-element rewards; dones flip once step_index reaches the
/// episode length (truncation, not a terminal state).
template <typename T>
Vec<T> step_episode(const EnvSpec& spec, EnvBatch<T>& st, const Mat<T>& actions) {
  Mat<T> next;
  Vec<T> rewards;
  step_physics(spec, st.obs, actions, next, rewards);
  st.obs = std::move(next);
  for (std::size_t b = 0; b < st.step_index.size(); ++b) {
    st.step_index[b] += 1;
    if (st.step_index[b] >= spec.episode_len) st.done[b] = 1;
  }
  return rewards;
}

/// H-step trajectories through the true dynamics, used as the rollout model
/// in oracle value expansion. Actions come from `policy` (one extra sample
/// at the final state provides the bootstrap point). No gradients exist on
/// this path by construction. The benchmark tasks never terminate early, so
/// continuation masks are all ones; time limits are ignored because targets
/// bootstrap through truncation.
template <typename T>
RolloutBatch<T> oracle_rollout(const EnvSpec& spec, const Mat<T>& start_obs,
                               const PolicySampler<T>& policy, int horizon, Rng& action_rng) {
  if (horizon < 1) throw ConfigError("oracle_rollout: horizon must be >= 1");
  const Eigen::Index B = start_obs.rows();
  RolloutBatch<T> rb;
  rb.states.reserve(static_cast<std::size_t>(horizon) + 1);
  rb.actions.reserve(static_cast<std::size_t>(horizon) + 1);
  rb.rewards.resize(B, horizon);
  rb.log_probs.resize(B, horizon + 1);
  rb.masks = Mat<T>::Ones(B, horizon);
  rb.states.push_back(start_obs);
  for (int t = 0; t < horizon; ++t) {
    SampledActions<T> sa = policy(rb.states.back(), action_rng);
    rb.log_probs.col(t) = sa.log_prob;
    Mat<T> next;
    Vec<T> rewards;
    step_physics(spec, rb.states.back(), sa.actions, next, rewards);
    rb.actions.push_back(std::move(sa.actions));
    rb.rewards.col(t) = rewards;
    rb.states.push_back(std::move(next));
  }
  SampledActions<T> last = policy(rb.states.back(), action_rng);
  rb.log_probs.col(horizon) = last.log_prob;
  rb.actions.push_back(std::move(last.actions));
  return rb;
}

template <typename T>
RolloutBatch<T> oracle_rollout(const EnvSpec& spec, const EnvBatch<T>& start,
                               const PolicySampler<T>& policy, int horizon, Rng& action_rng) {
  return oracle_rollout(spec, start.obs, policy, horizon, action_rng);
}

}  // namespace vex
