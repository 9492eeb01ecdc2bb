#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "vex/expansion.hpp"
#include "vex/replay.hpp"
#include "vex/sac.hpp"
#include "vex/train.hpp"

using namespace vex;

namespace {

SacConfig small_cfg() {
  SacConfig cfg;
  cfg.hidden_units = 12;
  cfg.batch_size = 8;
  return cfg;
}

Agent<double> make_agent(int seed, const SacConfig& cfg = small_cfg()) {
  Rng rng(static_cast<std::uint64_t>(seed), Stream::init);
  return Agent<double>::make(3, 1, cfg, rng);
}

void zero_net(MlpParams<double>& p) {
  for (auto& L : p.layers) {
    L.weight.setZero();
    L.bias.setZero();
  }
}

TransitionBatch<double> random_batch(int B, Rng& rng) {
  TransitionBatch<double> b;
  b.states = rng.normal_mat<double>(B, 3);
  b.actions = rng.uniform_mat<double>(B, 1, -1.0, 1.0);
  b.rewards = rng.uniform_mat<double>(B, 1, 0.0, 1.0).col(0);
  b.next_states = rng.normal_mat<double>(B, 3);
  b.terminal = Vec<double>::Zero(B);
  return b;
}

double max_param_delta(const MlpParams<double>& a, const MlpParams<double>& b) {
  double worst = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    worst = std::max(worst,
                     (a.layers[l].weight - b.layers[l].weight).cwiseAbs().maxCoeff());
    worst = std::max(worst, (a.layers[l].bias - b.layers[l].bias).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST(ActorLoss, VanishesWithZeroTemperatureAndZeroCritics) {
  auto agent = make_agent(1);
  agent.log_alpha = -2000.0;  // exp underflows to exactly zero
  zero_net(agent.q1);
  zero_net(agent.q2);
  Rng rng(5, Stream::actor);
  const auto [loss, entropy] = actor_loss(agent, Mat<double>(rng.normal_mat<double>(8, 3)), rng);
  EXPECT_DOUBLE_EQ(loss, 0.0);
  EXPECT_TRUE(std::isfinite(entropy));
}

TEST(ActorLoss, ReducesToMeanLogProbWithUnitTemperature) {
  auto agent = make_agent(2);
  agent.log_alpha = 0.0;
  zero_net(agent.q1);
  zero_net(agent.q2);
  Rng state_rng(6, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(16, 3);
  Rng rng_a(7, Stream::actor);
  const auto [loss, entropy] = actor_loss(agent, states, rng_a);

  // Recompute log pi at the same sampled actions by redrawing the stream.
  Rng rng_b(7, Stream::actor);
  const PolicyForward<double> pf = policy_forward(agent, states);
  const Mat<double> noise = rng_b.normal_mat<double>(16, 1);
  const auto smp = sample_log_prob(SquashedGaussian<double>{pf.mean, pf.log_std}, noise);
  EXPECT_NEAR(loss, smp.log_prob.mean(), 1e-12);
  EXPECT_NEAR(entropy, -smp.log_prob.mean(), 1e-12);
}

TEST(ActorLoss, UsesTheSmallerCriticAndIsSwapInvariant) {
  auto agent = make_agent(3);
  zero_net(agent.q1);
  zero_net(agent.q2);
  agent.q1.layers.back().bias << -5.0;
  agent.q2.layers.back().bias << 5.0;
  agent.log_alpha = -2000.0;
  Rng state_rng(8, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(8, 3);
  Rng r1(9, Stream::actor);
  const auto [loss, entropy] = actor_loss(agent, states, r1);
  EXPECT_DOUBLE_EQ(loss, 5.0);  // -min(Q1, Q2) = -(-5)

  std::swap(agent.q1, agent.q2);
  Rng r2(9, Stream::actor);
  const auto [swapped, entropy2] = actor_loss(agent, states, r2);
  EXPECT_DOUBLE_EQ(loss, swapped);
  EXPECT_DOUBLE_EQ(entropy, entropy2);
}

TEST(ActorLoss, GradientMatchesFiniteDifferences) {
  auto agent = make_agent(4);
  Rng state_rng(10, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(6, 3);
  Rng grad_rng(11, Stream::actor);
  const auto eval = detail::actor_eval(agent, states, grad_rng, true);
  ASSERT_FALSE(eval.grads.layers.empty());

  const auto fd = vex_test::finite_diff_grads<double>(agent.policy, [&] {
    Rng rng(11, Stream::actor);
    return actor_loss(agent, states, rng).first;
  });
  EXPECT_LT(vex_test::max_rel_error(eval.grads, fd), 1e-4);
}

TEST(CriticLoss, PerfectFitIsZeroAndConstantErrorIsHalfSquare) {
  auto agent = make_agent(5);
  Rng rng(12, Stream::generic);
  const auto batch = random_batch(8, rng);
  const Mat<double> x = concat_columns(batch.states, batch.actions);
  const Vec<double> q1 = mlp_forward(agent.q1, x).col(0);

  // Perfect fit for critic 1; make critic 2 identical so both residuals vanish.
  agent.q2 = agent.q1;
  EXPECT_DOUBLE_EQ(critic_loss(agent, batch, q1), 0.0);

  zero_net(agent.q1);
  zero_net(agent.q2);
  const double c = 3.0;
  EXPECT_DOUBLE_EQ(critic_loss(agent, batch, Vec<double>(Vec<double>::Constant(8, c))),
                   0.5 * c * c);
}

TEST(CriticLoss, MatchesHandRecomputation) {
  auto agent = make_agent(6);
  Rng rng(13, Stream::generic);
  const auto batch = random_batch(12, rng);
  const Vec<double> targets = rng.normal_mat<double>(12, 1).col(0);
  const double loss = critic_loss(agent, batch, targets);

  const Mat<double> x = concat_columns(batch.states, batch.actions);
  const Vec<double> q1 = mlp_forward(agent.q1, x).col(0);
  const Vec<double> q2 = mlp_forward(agent.q2, x).col(0);
  double expected = 0;
  for (int b = 0; b < 12; ++b)
    expected += 0.5 * (targets(b) - q1(b)) * (targets(b) - q1(b)) +
                0.5 * (targets(b) - q2(b)) * (targets(b) - q2(b));
  expected /= 2 * 12;
  EXPECT_NEAR(loss, expected, 1e-12);
}

TEST(CriticLoss, InvariantUnderBatchPermutation) {
  auto agent = make_agent(7);
  Rng rng(14, Stream::generic);
  const auto batch = random_batch(16, rng);
  const Vec<double> targets = rng.normal_mat<double>(16, 1).col(0);
  const double loss = critic_loss(agent, batch, targets);

  TransitionBatch<double> perm = batch;
  Vec<double> perm_targets(16);
  for (int b = 0; b < 16; ++b) {
    const int src = 15 - b;
    perm.states.row(b) = batch.states.row(src);
    perm.actions.row(b) = batch.actions.row(src);
    perm_targets(b) = targets(src);
  }
  EXPECT_NEAR(critic_loss(agent, perm, perm_targets), loss, 1e-12);
}

TEST(CriticLoss, GradientMatchesFiniteDifferences) {
  auto agent = make_agent(8);
  Rng rng(15, Stream::generic);
  const auto batch = random_batch(6, rng);
  const Vec<double> targets = rng.normal_mat<double>(6, 1).col(0);
  const auto eval = detail::critic_eval(agent, batch, targets, true);
  const auto fd = vex_test::finite_diff_grads<double>(
      agent.q1, [&] { return critic_loss(agent, batch, targets); });
  EXPECT_LT(vex_test::max_rel_error(eval.grads1, fd), 1e-4);
}

TEST(CriticLoss, ShapeMismatchRejected) {
  auto agent = make_agent(9);
  Rng rng(16, Stream::generic);
  const auto batch = random_batch(4, rng);
  EXPECT_THROW(critic_loss(agent, batch, Vec<double>(Vec<double>::Zero(5))), ConfigError);
}

TEST(Temperature, StationaryWhenEntropyMatchesTarget) {
  auto agent = make_agent(10);
  Rng state_rng(17, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(32, 3);
  Rng probe(18, Stream::temperature);
  const auto probe_sample = sample_action(agent, states, probe);
  agent.cfg.target_entropy = -probe_sample.log_prob.mean();

  const double before = agent.log_alpha;
  Rng update_rng(18, Stream::temperature);  // same draw as the probe
  temperature_update(agent, states, update_rng);
  EXPECT_NEAR(agent.log_alpha, before, 1e-12);
}

TEST(Temperature, RisesWhenEntropyBelowTarget) {
  auto agent = make_agent(11);
  agent.cfg.target_entropy = 10.0;  // far above any achievable entropy
  Rng state_rng(19, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(16, 3);
  const double before = agent.alpha();
  Rng rng(20, Stream::temperature);
  temperature_update(agent, states, rng);
  EXPECT_GT(agent.alpha(), before);
  EXPECT_GT(agent.alpha(), 0.0);
}

TEST(Temperature, FixedModeSkipsTheUpdate) {
  SacConfig cfg = small_cfg();
  cfg.alpha_mode = AlphaMode::fixed;
  cfg.init_alpha = 0.3;
  auto agent = make_agent(12, cfg);
  Rng state_rng(21, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(8, 3);
  Rng rng(22, Stream::temperature);
  EXPECT_DOUBLE_EQ(temperature_update(agent, states, rng), 0.0);
  EXPECT_DOUBLE_EQ(agent.alpha(), 0.3);
}

TEST(TargetUpdate, FullCopyAndSmallStep) {
  auto agent = make_agent(13);
  Rng rng(23, Stream::generic);
  init_glorot(agent.q1, rng);
  target_update(agent, 1.0);
  EXPECT_EQ(max_param_delta(agent.q1_target, agent.q1), 0.0);

  zero_net(agent.q1_target);
  for (auto& L : agent.q1.layers) {
    L.weight.setOnes();
    L.bias.setOnes();
  }
  target_update(agent, 0.005);
  EXPECT_DOUBLE_EQ(agent.q1_target.layers[0].weight(0, 0), 0.005);
}

TEST(TargetUpdate, GeometricConvergenceWithFrozenOnline) {
  auto agent = make_agent(14);
  zero_net(agent.q1_target);
  for (auto& L : agent.q1.layers) {
    L.weight.setOnes();
    L.bias.setOnes();
  }
  const double tau = 0.05;
  const int k = 20;
  for (int i = 0; i < k; ++i) target_update(agent, tau);
  const double expected_err = std::pow(1.0 - tau, k);
  EXPECT_NEAR(agent.q1_target.layers[0].weight(0, 0), 1.0 - expected_err, 1e-12);
}

TEST(TargetUpdate, CriticUpdateTouchesTargetsOnlyThroughPolyak) {
  // Behavioral detachment: after a critic step, the target nets moved by
  // exactly the polyak formula applied to the new online nets.
  auto agent = make_agent(15);
  Rng rng(24, Stream::generic);
  const auto batch = random_batch(8, rng);
  const Vec<double> targets = rng.normal_mat<double>(8, 1).col(0);
  const auto t1_before = agent.q1_target;

  critic_update(agent, batch, targets);
  target_update(agent, agent.cfg.tau);

  const double tau = agent.cfg.tau;
  for (std::size_t l = 0; l < t1_before.layers.size(); ++l) {
    const Mat<double> expected = (1.0 - tau) * t1_before.layers[l].weight +
                                 tau * agent.q1.layers[l].weight;
    EXPECT_TRUE(agent.q1_target.layers[l].weight.isApprox(expected, 1e-14));
  }
}

TEST(Agent, AlphaStaysPositiveThroughUpdates) {
  auto agent = make_agent(16);
  Rng state_rng(25, Stream::generic);
  const Mat<double> states = state_rng.normal_mat<double>(8, 3);
  Rng rng(26, Stream::temperature);
  for (int i = 0; i < 50; ++i) temperature_update(agent, states, rng);
  EXPECT_GT(agent.alpha(), 0.0);
}

// One full update through the expansion path at H = 0 must equal a
// straight-line SAC update written out longhand: same streams, same batch,
// parameter deltas within 1e-10.
TEST(SacReduction, ExpansionPathAtHorizonZeroIsStandardSac) {
  SacConfig cfg;
  cfg.hidden_units = 24;
  cfg.batch_size = 16;
  const EnvSpec spec = EnvSpec::pendulum();
  const std::uint64_t seed = 99;

  Rng init_a(seed, Stream::init);
  Agent<double> framework = Agent<double>::make(3, 1, cfg, init_a);
  Agent<double> reference = framework;  // identical starting point

  Rng batch_rng(seed, Stream::batch);
  auto batch = random_batch(16, batch_rng);
  // Make states resemble valid observations.
  for (int b = 0; b < 16; ++b) {
    const double th = batch_rng.uniform(-M_PI, M_PI);
    batch.states(b, 0) = std::cos(th);
    batch.states(b, 1) = std::sin(th);
    const double th2 = batch_rng.uniform(-M_PI, M_PI);
    batch.next_states(b, 0) = std::cos(th2);
    batch.next_states(b, 1) = std::sin(th2);
  }

  // --- framework path: rollout source + expansion target, H = 0
  {
    Agent<double>& agent = framework;
    Rng target_act(seed, Stream::target_actions), target_noise(seed, Stream::target_noise);
    Rng actor_rng(seed, Stream::actor), temp_rng(seed, Stream::temperature);
    const RolloutSource<double> source = make_oracle_source(spec, agent);
    const auto rollout = source(batch.next_states, 0, target_act, target_noise);
    const Vec<double> targets = critic_target_from_rollout(
        batch, rollout, make_bootstrap_q(agent, BootstrapMode::twin_min_target),
        agent.alpha(), cfg.gamma, 0);
    critic_update(agent, batch, targets);
    actor_update(agent, batch.states, actor_rng);
    temperature_update(agent, batch.states, temp_rng);
    target_update(agent, cfg.tau);
  }

  // --- reference path: textbook SAC update, written out longhand
  {
    Agent<double>& agent = reference;
    const int B = 16;
    const double alpha = agent.alpha();
    const double gamma = cfg.gamma;

    // Target: y = r + gamma (min_i Q_target_i(s', a') - alpha log pi(a'|s')).
    Rng target_act(seed, Stream::target_actions);
    const PolicyForward<double> pf = policy_forward(agent, batch.next_states);
    const Mat<double> noise = target_act.normal_mat<double>(B, 1);
    const auto smp = sample_log_prob(SquashedGaussian<double>{pf.mean, pf.log_std}, noise);
    const Mat<double> xq = concat_columns(batch.next_states, smp.action);
    const Vec<double> q1t = mlp_forward(agent.q1_target, xq).col(0);
    const Vec<double> q2t = mlp_forward(agent.q2_target, xq).col(0);
    Vec<double> y(B);
    for (int b = 0; b < B; ++b)
      y(b) = batch.rewards(b) + gamma * (1.0 - batch.terminal(b)) *
                                    (std::min(q1t(b), q2t(b)) - alpha * smp.log_prob(b));

    // Critic step: J = mean over batch and critics of (y - Q)^2 / 2.
    const Mat<double> x = concat_columns(batch.states, batch.actions);
    auto critic_step = [&](MlpParams<double>& net, AdamState<double>& opt) {
      MlpCache<double> cache;
      const Vec<double> q = mlp_forward(net, x, &cache).col(0);
      MlpParams<double> grads;
      mlp_backward(net, cache, Mat<double>((q - y) / (2.0 * B)), grads);
      adam_step(net, grads, opt, cfg.critic_opt);
    };
    critic_step(agent.q1, agent.q1_opt);
    critic_step(agent.q2, agent.q2_opt);

    // Actor step: J = mean(alpha log pi(a|s) - min_i Q_i(s, a)), a = tanh(u).
    {
      Rng actor_rng(seed, Stream::actor);
      MlpCache<double> pc;
      const Mat<double> head = mlp_forward(agent.policy, batch.states, &pc);
      const Mat<double> mean = head.leftCols(1);
      const Mat<double> raw = head.rightCols(1);
      const Mat<double> logstd = clamp_log_std(raw);
      const Mat<double> eps = actor_rng.normal_mat<double>(B, 1);
      const Mat<double> sd = logstd.array().exp();
      const Mat<double> u = mean + sd.cwiseProduct(eps);
      const Mat<double> a = u.array().tanh();
      Vec<double> logp(B);
      for (int b = 0; b < B; ++b)
        logp(b) = -logstd(b, 0) - 0.5 * eps(b, 0) * eps(b, 0) - 0.5 * std::log(2 * M_PI) -
                  tanh_log_jacobian(u(b, 0));

      const Mat<double> xa = concat_columns(batch.states, a);
      MlpCache<double> c1, c2;
      const Vec<double> q1 = mlp_forward(agent.q1, xa, &c1).col(0);
      const Vec<double> q2 = mlp_forward(agent.q2, xa, &c2).col(0);
      Mat<double> dq1 = Mat<double>::Zero(B, 1), dq2 = Mat<double>::Zero(B, 1);
      for (int b = 0; b < B; ++b)
        (q1(b) <= q2(b) ? dq1 : dq2)(b, 0) = -1.0 / B;
      Mat<double> dx1, dx2;
      MlpParams<double> scratch1, scratch2;
      mlp_backward(agent.q1, c1, dq1, scratch1, &dx1);
      mlp_backward(agent.q2, c2, dq2, scratch2, &dx2);
      const Mat<double> da = dx1.rightCols(1) + dx2.rightCols(1);

      Mat<double> d_head(B, 2);
      for (int b = 0; b < B; ++b) {
        const double du =
            (alpha / B) * 2.0 * a(b, 0) + da(b, 0) * (1.0 - a(b, 0) * a(b, 0));
        d_head(b, 0) = du;
        const bool open = raw(b, 0) > kLogStdMin && raw(b, 0) < kLogStdMax;
        d_head(b, 1) = open ? du * sd(b, 0) * eps(b, 0) - alpha / B : 0.0;
      }
      MlpParams<double> pgrads;
      mlp_backward(agent.policy, pc, d_head, pgrads);
      adam_step(agent.policy, pgrads, agent.policy_opt, cfg.actor_opt);
    }

    // Temperature step on a fresh sample.
    {
      Rng temp_rng(seed, Stream::temperature);
      const auto s = sample_action(agent, batch.states, temp_rng);
      const double drift = s.log_prob.mean() + agent.target_entropy();
      adam_step_scalar(agent.log_alpha, -drift, agent.alpha_opt, cfg.alpha_opt);
    }

    // Polyak.
    target_update(agent, cfg.tau);
  }

  EXPECT_LT(max_param_delta(framework.policy, reference.policy), 1e-10);
  EXPECT_LT(max_param_delta(framework.q1, reference.q1), 1e-10);
  EXPECT_LT(max_param_delta(framework.q2, reference.q2), 1e-10);
  EXPECT_LT(max_param_delta(framework.q1_target, reference.q1_target), 1e-10);
  EXPECT_LT(max_param_delta(framework.q2_target, reference.q2_target), 1e-10);
  EXPECT_NEAR(framework.log_alpha, reference.log_alpha, 1e-10);
}
