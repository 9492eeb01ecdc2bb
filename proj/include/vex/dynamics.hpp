#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vex/adam.hpp"
#include "vex/common.hpp"
#include "vex/mlp.hpp"
#include "vex/replay.hpp"
#include "vex/rng.hpp"
#include "vex/rollout.hpp"

namespace vex {

enum class MemberResample { per_step, per_trajectory };

struct ModelConfig {
  int members = 5;
  int hidden_units = 128;
  int hidden_layers = 2;
  AdamConfig opt{1e-3, 0.9, 0.999, 1e-8};
  double bound_reg = 1e-3;       // pulls the learned log-variance bounds together
  int refit_interval = 250;      // environment steps between refits
  int epochs = 5;
  int batch_size = 256;
  double holdout_frac = 0.1;
  int min_fit = 500;             // skip refits until this many transitions exist
  int max_batches_per_member = 200;  // wall-clock cap per refit
  MemberResample resample = MemberResample::per_step;
  double max_logvar_init = 0.5;
  double min_logvar_init = -10.0;

  void validate() const {
    if (members < 1) throw ConfigError("model: members must be >= 1");
    if (epochs < 1 || batch_size < 1) throw ConfigError("model: bad training schedule");
    if (!(holdout_frac > 0.0 && holdout_frac < 0.5))
      throw ConfigError("model: holdout_frac must be in (0, 0.5)");
    if (min_fit < 2) throw ConfigError("model: min_fit too small");
    if (max_logvar_init <= min_logvar_init)
      throw ConfigError("model: log-variance bounds inverted");
  }
};

/// One probabilistic network: predicts mean and log-variance of
/// (state delta ++ reward) from a normalized (state, action) input.
template <typename T>
struct EnsembleMember {
  MlpParams<T> net;
  Vec<T> max_logvar, min_logvar;  // learned per-dimension soft bounds
  AdamState<T> opt;
  AdamVecState<T> opt_max, opt_min;
};

template <typename T>
struct EnsembleModel {
  ModelConfig cfg;
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<EnsembleMember<T>> members;
  Vec<T> in_mean, in_std;  // input normalization statistics (std > 0)

  int target_dim() const { return obs_dim + 1; }

  static EnsembleModel make(int obs_dim, int act_dim, const ModelConfig& cfg, Rng& init_rng) {
    cfg.validate();
    EnsembleModel m;
    m.cfg = cfg;
    m.obs_dim = obs_dim;
    m.act_dim = act_dim;
    std::vector<int> sizes{obs_dim + act_dim};
    for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden_units);
    sizes.push_back(2 * (obs_dim + 1));
    for (int k = 0; k < cfg.members; ++k) {
      EnsembleMember<T> mem;
      mem.net = make_mlp<T>(sizes, Activation::relu, Activation::identity);
      init_glorot(mem.net, init_rng);
      mem.max_logvar = Vec<T>::Constant(obs_dim + 1, static_cast<T>(cfg.max_logvar_init));
      mem.min_logvar = Vec<T>::Constant(obs_dim + 1, static_cast<T>(cfg.min_logvar_init));
      mem.opt = AdamState<T>::like(mem.net);
      mem.opt_max = AdamVecState<T>::like(mem.max_logvar);
      mem.opt_min = AdamVecState<T>::like(mem.min_logvar);
      m.members.push_back(std::move(mem));
    }
    m.in_mean = Vec<T>::Zero(obs_dim + act_dim);
    m.in_std = Vec<T>::Ones(obs_dim + act_dim);
    return m;
  }

  void validate() const {
    for (const auto& mem : members)
      for (Eigen::Index d = 0; d < mem.max_logvar.size(); ++d)
        if (mem.min_logvar(d) > mem.max_logvar(d))
          throw ConfigError("model: log-variance bounds crossed");
    if ((in_std.array() <= T(0)).any()) throw ConfigError("model: non-positive input std");
  }

  std::string fingerprint() const {
    return "ensemble|n" + std::to_string(cfg.members) + "|obs" + std::to_string(obs_dim) +
           "|act" + std::to_string(act_dim) + "|net:" +
           (members.empty() ? std::string("none") : members.front().net.shape_string()) +
           "|dtype:" + (sizeof(T) == 4 ? "f32" : "f64");
  }
};

template <typename T>
struct ModelPrediction {
  Mat<T> mean;     // [B x (n+1)]: state delta ++ reward
  Mat<T> log_var;  // [B x (n+1)], soft-clamped between the learned bounds
};

template <typename T>
Mat<T> normalize_inputs(const EnsembleModel<T>& model, const Mat<T>& x) {
  return ((x.rowwise() - model.in_mean.transpose()).array().rowwise() /
          model.in_std.transpose().array())
      .matrix();
}

template <typename T>
Mat<T> denormalize_inputs(const EnsembleModel<T>& model, const Mat<T>& xn) {
  return ((xn.array().rowwise() * model.in_std.transpose().array()).matrix().rowwise() +
          model.in_mean.transpose());
}

namespace detail {

template <typename T>
Mat<T> sigmoid(const Mat<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

/// Soft clamp of raw log-variance logits: bounds-midpoint at zero logits,
/// saturating at the learned bounds.
template <typename T>
Mat<T> soft_clamp_logvar(const Mat<T>& raw, const Vec<T>& min_lv, const Vec<T>& max_lv,
                         Mat<T>* sig_out = nullptr) {
  const Mat<T> sig = sigmoid(raw);
  if (sig_out) *sig_out = sig;
  Mat<T> lv(raw.rows(), raw.cols());
  for (Eigen::Index d = 0; d < raw.cols(); ++d)
    lv.col(d) = min_lv(d) + (max_lv(d) - min_lv(d)) * sig.col(d).array();
  return lv;
}

}  // namespace detail

/// Forward pass of one ensemble member on raw (un-normalized) states and
/// actions. Deterministic; member index must be valid.
template <typename T>
ModelPrediction<T> model_forward(const EnsembleModel<T>& model, int member, const Mat<T>& states,
                                 const Mat<T>& actions, MlpCache<T>* cache = nullptr,
                                 Mat<T>* raw_logvar = nullptr, Mat<T>* sig = nullptr) {
  if (member < 0 || member >= model.cfg.members)
    throw ConfigError("model_forward: member index out of range");
  if (!all_finite(states) || !all_finite(actions))
    throw InputError("model_forward: non-finite inputs");
  const auto& mem = model.members[static_cast<std::size_t>(member)];
  const Mat<T> x = normalize_inputs(model, concat_columns(states, actions));
  const Mat<T> out = mlp_forward(mem.net, x, cache);
  const int D = model.target_dim();
  ModelPrediction<T> pred;
  pred.mean = out.leftCols(D);
  const Mat<T> raw = out.rightCols(D);
  if (raw_logvar) *raw_logvar = raw;
  pred.log_var = detail::soft_clamp_logvar(raw, mem.min_logvar, mem.max_logvar, sig);
  return pred;
}

/// Gaussian negative log-likelihood of targets = (next - state ++ reward),
/// without the constant log(2 pi)/2 term (documented omission), plus
/// bound_reg * sum(max_logvar - min_logvar) when bound_reg > 0:
///   mean over batch of sum_d [ (t - m)^2 / (2 s^2) + log(s^2) / 2 ].
template <typename T>
T nll_loss(const EnsembleModel<T>& model, int member, const Mat<T>& states,
           const Mat<T>& actions, const Mat<T>& targets, double bound_reg = 0.0) {
  const ModelPrediction<T> pred = model_forward(model, member, states, actions);
  if (targets.rows() != states.rows() || targets.cols() != model.target_dim())
    throw ConfigError("nll_loss: target shape mismatch");
  const auto resid = (targets - pred.mean).array();
  const auto inv_var = (-pred.log_var.array()).exp();
  T loss = (resid.square() * inv_var * T(0.5) + pred.log_var.array() * T(0.5))
               .rowwise()
               .sum()
               .mean();
  const auto& mem = model.members[static_cast<std::size_t>(member)];
  loss += static_cast<T>(bound_reg) * (mem.max_logvar - mem.min_logvar).sum();
  if (!std::isfinite(static_cast<double>(loss))) throw NumericError("nll_loss: non-finite loss");
  return loss;
}

namespace detail {

/// One Adam step of one member on one batch; returns the training loss.
template <typename T>
T nll_update(EnsembleModel<T>& model, int member, const Mat<T>& states, const Mat<T>& actions,
             const Mat<T>& targets) {
  auto& mem = model.members[static_cast<std::size_t>(member)];
  MlpCache<T> cache;
  Mat<T> raw, sig;
  const ModelPrediction<T> pred = model_forward(model, member, states, actions, &cache, &raw, &sig);
  const Eigen::Index B = states.rows();
  const int D = model.target_dim();
  const T invB = T(1) / static_cast<T>(B);
  const T reg = static_cast<T>(model.cfg.bound_reg);

  const Mat<T> resid = targets - pred.mean;
  const Mat<T> inv_var = (-pred.log_var.array()).exp().matrix();
  const T data_loss = ((resid.array().square() * inv_var.array() * T(0.5)) +
                       pred.log_var.array() * T(0.5))
                          .rowwise()
                          .sum()
                          .mean();
  const T loss = data_loss + reg * (mem.max_logvar - mem.min_logvar).sum();
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("model training: non-finite loss");

  const Mat<T> d_mean = (-resid.array() * inv_var.array() * invB).matrix();
  const Mat<T> d_lv =
      ((T(0.5) - resid.array().square() * inv_var.array() * T(0.5)) * invB).matrix();

  // Through the sigmoid clamp to raw logits and both bounds.
  Mat<T> d_raw(B, D);
  Vec<T> d_max = Vec<T>::Constant(D, reg);
  Vec<T> d_min = Vec<T>::Constant(D, -reg);
  for (Eigen::Index d = 0; d < D; ++d) {
    const T span = mem.max_logvar(d) - mem.min_logvar(d);
    d_raw.col(d) =
        (d_lv.col(d).array() * span * sig.col(d).array() * (T(1) - sig.col(d).array()))
            .matrix();
    d_max(d) += (d_lv.col(d).array() * sig.col(d).array()).sum();
    d_min(d) += (d_lv.col(d).array() * (T(1) - sig.col(d).array())).sum();
  }

  Mat<T> d_head(B, 2 * D);
  d_head.leftCols(D) = d_mean;
  d_head.rightCols(D) = d_raw;
  MlpParams<T> grads;
  mlp_backward(mem.net, cache, d_head, grads);
  adam_step(mem.net, grads, mem.opt, model.cfg.opt);
  adam_step_vec(mem.max_logvar, d_max, mem.opt_max, model.cfg.opt);
  adam_step_vec(mem.min_logvar, d_min, mem.opt_min, model.cfg.opt);
  return loss;
}

}  // namespace detail

struct ModelFitReport {
  bool skipped = false;
  std::vector<double> holdout_nll;  // per member, regularizer-free
};

/// Refits every member on its own bootstrap resample of the buffer.
/// Normalization statistics are refreshed from the full buffer first; a
/// shared random holdout split provides the reported per-member NLL.
template <typename T>
ModelFitReport train_model(EnsembleModel<T>& model, const ReplayBuffer<T>& buffer, int epochs,
                           Rng& rng) {
  ModelFitReport report;
  const auto n = buffer.size();
  if (n < static_cast<std::size_t>(model.cfg.min_fit)) {
    report.skipped = true;
    return report;
  }

  const Eigen::Index N = static_cast<Eigen::Index>(n);
  Mat<T> states(N, model.obs_dim), actions(N, model.act_dim), targets(N, model.target_dim());
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& t = buffer[static_cast<std::size_t>(i)];
    states.row(i) = t.state.transpose();
    actions.row(i) = t.action.transpose();
    targets.row(i).head(model.obs_dim) = (t.next_state - t.state).transpose();
    targets(i, model.obs_dim) = t.reward;
  }

  // Refresh input normalization over the whole buffer.
  const Mat<T> inputs = concat_columns(states, actions);
  model.in_mean = inputs.colwise().mean().transpose();
  Vec<T> var = ((inputs.rowwise() - model.in_mean.transpose()).array().square())
                   .colwise()
                   .mean()
                   .transpose();
  model.in_std = var.array().sqrt().max(T(1e-8)).matrix();

  // Shared holdout split (random permutation prefix).
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  for (Eigen::Index i = N - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  const auto holdout_size =
      std::max<Eigen::Index>(1, static_cast<Eigen::Index>(model.cfg.holdout_frac *
                                                          static_cast<double>(N)));
  const std::vector<Eigen::Index> holdout(perm.begin(), perm.begin() + holdout_size);
  const std::vector<Eigen::Index> pool(perm.begin() + holdout_size, perm.end());

  auto gather = [](const Mat<T>& src, const std::vector<Eigen::Index>& idx) {
    Mat<T> out(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
    return out;
  };
  const Mat<T> ho_s = gather(states, holdout), ho_a = gather(actions, holdout),
               ho_t = gather(targets, holdout);

  const auto pool_n = static_cast<Eigen::Index>(pool.size());
  const int batch = model.cfg.batch_size;
  for (int k = 0; k < model.cfg.members; ++k) {
    // Bootstrap resample of the training pool for this member.
    std::vector<Eigen::Index> boot(static_cast<std::size_t>(pool_n));
    for (auto& i : boot) i = pool[static_cast<std::size_t>(rng.uniform_int(pool_n))];
    int budget = model.cfg.max_batches_per_member;
    for (int e = 0; e < epochs && budget > 0; ++e) {
      for (Eigen::Index off = 0; off < pool_n && budget > 0; off += batch, --budget) {
        const auto len = std::min<Eigen::Index>(batch, pool_n - off);
        std::vector<Eigen::Index> idx(boot.begin() + off, boot.begin() + off + len);
        detail::nll_update(model, k, gather(states, idx), gather(actions, idx),
                           gather(targets, idx));
      }
      // Fresh pass order next epoch.
      for (Eigen::Index i = pool_n - 1; i > 0; --i)
        std::swap(boot[static_cast<std::size_t>(i)],
                  boot[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    }
    report.holdout_nll.push_back(
        static_cast<double>(nll_loss(model, k, ho_s, ho_a, ho_t, 0.0)));
  }
  return report;
}

/// Uniform draw over ensemble members (epistemic uncertainty).
template <typename T>
int sample_member(const EnsembleModel<T>& model, Rng& rng) {
  return static_cast<int>(rng.uniform_int(model.cfg.members));
}

/// H-step imagined trajectories. Per step (or per trajectory, by config)
/// each batch element draws a member uniformly, then samples the Gaussian
/// (state delta, reward) prediction. The tasks carry no learned termination,
/// so masks stay 1 unless a non-finite prediction truncates an element, in
/// which case its mask is zeroed from that step onward and the cut is
/// counted in the batch diagnostics.
template <typename T>
RolloutBatch<T> model_rollout(const EnsembleModel<T>& model, const Mat<T>& starts,
                              const PolicySampler<T>& policy, int horizon, Rng& action_rng,
                              Rng& noise_rng) {
  if (horizon < 1) throw ConfigError("model_rollout: horizon must be >= 1");
  const Eigen::Index B = starts.rows();
  const int D = model.target_dim();
  RolloutBatch<T> rb;
  rb.rewards.resize(B, horizon);
  rb.log_probs.resize(B, horizon + 1);
  rb.masks = Mat<T>::Ones(B, horizon);
  rb.states.push_back(starts);

  std::vector<int> member(static_cast<std::size_t>(B), 0);
  std::vector<std::uint8_t> alive(static_cast<std::size_t>(B), 1);
  if (model.cfg.resample == MemberResample::per_trajectory)
    for (auto& k : member) k = sample_member(model, noise_rng);

  for (int t = 0; t < horizon; ++t) {
    SampledActions<T> sa = policy(rb.states.back(), action_rng);
    rb.log_probs.col(t) = sa.log_prob;
    if (model.cfg.resample == MemberResample::per_step)
      for (auto& k : member) k = sample_member(model, noise_rng);
    const Mat<T> noise = noise_rng.template normal_mat<T>(B, D);

    // Group rows by member for batched forwards.
    const Mat<T>& cur = rb.states.back();
    Mat<T> next = cur;
    Vec<T> reward = Vec<T>::Zero(B);
    for (int k = 0; k < model.cfg.members; ++k) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index b = 0; b < B; ++b)
        if (member[static_cast<std::size_t>(b)] == k && alive[static_cast<std::size_t>(b)])
          rows.push_back(b);
      if (rows.empty()) continue;
      Mat<T> s(static_cast<Eigen::Index>(rows.size()), model.obs_dim);
      Mat<T> a(static_cast<Eigen::Index>(rows.size()), model.act_dim);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        s.row(static_cast<Eigen::Index>(i)) = cur.row(rows[i]);
        a.row(static_cast<Eigen::Index>(i)) = sa.actions.row(rows[i]);
      }
      const ModelPrediction<T> pred = model_forward(model, k, s, a);
      const Mat<T> std_dev = (pred.log_var.array() * T(0.5)).exp().matrix();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Eigen::Index b = rows[i];
        bool ok = true;
        for (int d = 0; d < D; ++d) {
          const T draw = pred.mean(static_cast<Eigen::Index>(i), d) +
                         std_dev(static_cast<Eigen::Index>(i), d) * noise(b, d);
          if (!std::isfinite(static_cast<double>(draw))) ok = false;
          if (d < model.obs_dim)
            next(b, d) = cur(b, d) + draw;
          else
            reward(b) = draw;
        }
        if (!ok) {
          alive[static_cast<std::size_t>(b)] = 0;
          next.row(b) = cur.row(b);
          reward(b) = T(0);
          ++rb.nonfinite_truncations;
        }
      }
    }
    for (Eigen::Index b = 0; b < B; ++b)
      if (!alive[static_cast<std::size_t>(b)]) rb.masks.block(b, t, 1, horizon - t).setZero();
    rb.actions.push_back(std::move(sa.actions));
    rb.rewards.col(t) = reward;
    rb.states.push_back(std::move(next));
  }
  SampledActions<T> last = policy(rb.states.back(), action_rng);
  rb.log_probs.col(horizon) = last.log_prob;
  rb.actions.push_back(std::move(last.actions));
  return rb;
}

}  // namespace vex
