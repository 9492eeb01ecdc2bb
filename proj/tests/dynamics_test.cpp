#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "vex/dynamics.hpp"
#include "vex/replay.hpp"

using namespace vex;

namespace {

ModelConfig small_model_cfg(int members = 2) {
  ModelConfig cfg;
  cfg.members = members;
  cfg.hidden_units = 32;
  cfg.min_fit = 64;
  return cfg;
}

EnsembleModel<double> make_model(int seed, const ModelConfig& cfg, int n = 3, int m = 1) {
  Rng rng(static_cast<std::uint64_t>(seed), Stream::model_init);
  return EnsembleModel<double>::make(n, m, cfg, rng);
}

void zero_member(EnsembleMember<double>& mem) {
  for (auto& L : mem.net.layers) {
    L.weight.setZero();
    L.bias.setZero();
  }
}

PolicySampler<double> constant_policy(double value) {
  return [value](const Mat<double>& states, Rng&) {
    SampledActions<double> s;
    s.actions = Mat<double>::Constant(states.rows(), 1, value);
    s.log_prob = Vec<double>::Constant(states.rows(), -1.0);
    return s;
  };
}

// Linear benchmark system: next = A s + B a, reward = w . s + v . a.
struct LinearSystem {
  Mat<double> A, B;
  Vec<double> w, v;

  static LinearSystem make(int n, int m, Rng& rng) {
    LinearSystem sys;
    sys.A = 0.9 * Mat<double>(rng.normal_mat<double>(n, n)) / std::sqrt(n);
    sys.B = Mat<double>(rng.normal_mat<double>(n, m)) / std::sqrt(m);
    sys.w = rng.normal_mat<double>(n, 1).col(0);
    sys.v = rng.normal_mat<double>(m, 1).col(0);
    return sys;
  }

  Transition<double> sample(Rng& rng) const {
    Transition<double> t;
    t.state = rng.normal_mat<double>(A.rows(), 1).col(0);
    t.action = rng.uniform_mat<double>(B.cols(), 1, -1.0, 1.0).col(0);
    t.next_state = A * t.state + B * t.action;
    t.reward = w.dot(t.state) + v.dot(t.action);
    return t;
  }
};

}  // namespace

TEST(ModelForward, ZeroNetworkPredictsNoChangeAndMidpointVariance) {
  auto model = make_model(1, small_model_cfg(1));
  zero_member(model.members[0]);
  Rng rng(2, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(4, 3);
  const Mat<double> a = rng.uniform_mat<double>(4, 1, -1, 1);
  const auto pred = model_forward(model, 0, s, a);
  EXPECT_TRUE(pred.mean.isZero(0.0));  // delta parameterization: s' = s
  // Sigmoid soft clamp at zero logits sits exactly at the bound midpoint.
  const double mid = 0.5 * (model.cfg.max_logvar_init + model.cfg.min_logvar_init);
  for (Eigen::Index i = 0; i < pred.log_var.size(); ++i)
    EXPECT_DOUBLE_EQ(pred.log_var(i), mid);
  EXPECT_EQ(pred.mean.rows(), 4);
  EXPECT_EQ(pred.mean.cols(), 4);  // n + 1
  EXPECT_EQ(pred.log_var.cols(), 4);
}

TEST(ModelForward, IdenticalMembersAgreeAndIndexIsChecked) {
  auto model = make_model(3, small_model_cfg(2));
  model.members[1].net = model.members[0].net;
  Rng rng(4, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(5, 3);
  const Mat<double> a = rng.uniform_mat<double>(5, 1, -1, 1);
  const auto p0 = model_forward(model, 0, s, a);
  const auto p1 = model_forward(model, 1, s, a);
  EXPECT_TRUE(p0.mean.isApprox(p1.mean, 0.0));
  EXPECT_TRUE(p0.log_var.isApprox(p1.log_var, 0.0));
  EXPECT_THROW(model_forward(model, 2, s, a), ConfigError);
}

TEST(Nll, PerfectUnitVariancePredictionScoresZero) {
  ModelConfig cfg = small_model_cfg(1);
  cfg.max_logvar_init = 1.0;  // midpoint 0 -> sigma^2 = 1 at zero logits
  cfg.min_logvar_init = -1.0;
  auto model = make_model(5, cfg);
  zero_member(model.members[0]);
  model.members[0].max_logvar.setConstant(1.0);
  model.members[0].min_logvar.setConstant(-1.0);
  Rng rng(6, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(8, 3);
  const Mat<double> a = rng.uniform_mat<double>(8, 1, -1, 1);
  const Mat<double> targets = Mat<double>::Zero(8, 4);  // matches the zero prediction
  EXPECT_NEAR(nll_loss(model, 0, s, a, targets, 0.0), 0.0, 1e-12);
}

TEST(Nll, UnitVarianceReducesToHalfMse) {
  ModelConfig cfg = small_model_cfg(1);
  cfg.max_logvar_init = 1.0;
  cfg.min_logvar_init = -1.0;
  auto model = make_model(7, cfg);
  zero_member(model.members[0]);
  Rng rng(8, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(10, 3);
  const Mat<double> a = rng.uniform_mat<double>(10, 1, -1, 1);
  const Mat<double> targets = rng.normal_mat<double>(10, 4);
  const double loss = nll_loss(model, 0, s, a, targets, 0.0);
  const double half_mse = targets.array().square().rowwise().sum().mean() * 0.5;
  EXPECT_NEAR(loss, half_mse, 1e-12);
}

TEST(Nll, InflatingVarianceOnZeroResidualIncreasesLoss) {
  ModelConfig low = small_model_cfg(1);
  low.max_logvar_init = 1.0;
  low.min_logvar_init = -1.0;
  auto model = make_model(9, low);
  zero_member(model.members[0]);
  Rng rng(10, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(6, 3);
  const Mat<double> a = rng.uniform_mat<double>(6, 1, -1, 1);
  const Mat<double> targets = Mat<double>::Zero(6, 4);
  const double base = nll_loss(model, 0, s, a, targets, 0.0);
  model.members[0].max_logvar.setConstant(2.0);
  model.members[0].min_logvar.setConstant(2.0);  // forces sigma^2 = e^2
  const double inflated = nll_loss(model, 0, s, a, targets, 0.0);
  EXPECT_GT(inflated, base);
}

TEST(Nll, GradientMatchesFiniteDifferences) {
  auto model = make_model(11, small_model_cfg(1));
  Rng rng(12, Stream::generic);
  const Mat<double> s = rng.normal_mat<double>(5, 3);
  const Mat<double> a = rng.uniform_mat<double>(5, 1, -1, 1);
  const Mat<double> targets = 0.1 * rng.normal_mat<double>(5, 4);

  // Copy for analytic gradients: one update exposes them through the Adam
  // direction only, so instead call the internal update pieces directly via
  // finite differences on nll_loss (the training loss with regularizer).
  auto& mem = model.members[0];
  MlpCache<double> cache;
  Mat<double> raw, sig;
  const auto pred = model_forward(model, 0, s, a, &cache, &raw, &sig);
  const Mat<double> resid = targets - pred.mean;
  const Mat<double> inv_var = (-pred.log_var.array()).exp().matrix();
  const double invB = 1.0 / 5.0;
  const Mat<double> d_mean = (-resid.array() * inv_var.array() * invB).matrix();
  const Mat<double> d_lv =
      ((0.5 - resid.array().square() * inv_var.array() * 0.5) * invB).matrix();
  Mat<double> d_raw(5, 4);
  for (Eigen::Index d = 0; d < 4; ++d) {
    const double span = mem.max_logvar(d) - mem.min_logvar(d);
    d_raw.col(d) =
        (d_lv.col(d).array() * span * sig.col(d).array() * (1.0 - sig.col(d).array()))
            .matrix();
  }
  Mat<double> d_head(5, 8);
  d_head.leftCols(4) = d_mean;
  d_head.rightCols(4) = d_raw;
  MlpParams<double> analytic;
  mlp_backward(mem.net, cache, d_head, analytic);

  const auto fd = vex_test::finite_diff_grads<double>(
      mem.net, [&] { return nll_loss(model, 0, s, a, targets, 0.0); });
  EXPECT_LT(vex_test::max_rel_error(analytic, fd), 1e-4);
}

TEST(TrainModel, SkipsWhenBufferTooSmall) {
  auto model = make_model(13, small_model_cfg(2));
  ReplayBuffer<double> buffer(1000, 3, 1);
  Rng rng(14, Stream::model_fit);
  const auto report = train_model(model, buffer, 2, rng);
  EXPECT_TRUE(report.skipped);
}

TEST(TrainModel, FitsLinearSystemBelowErrorFloor) {
  Rng sys_rng(15, Stream::generic);
  const auto sys = LinearSystem::make(3, 2, sys_rng);
  ReplayBuffer<double> buffer(4000, 3, 2);
  for (int i = 0; i < 2000; ++i) buffer.push(sys.sample(sys_rng));

  ModelConfig cfg;
  cfg.members = 2;
  cfg.hidden_units = 64;
  cfg.min_fit = 256;
  cfg.max_batches_per_member = 100000;
  Rng init(16, Stream::model_init);
  auto model = EnsembleModel<double>::make(3, 2, cfg, init);
  Rng fit(17, Stream::model_fit);
  const auto report = train_model(model, buffer, 120, fit);
  ASSERT_FALSE(report.skipped);
  ASSERT_EQ(report.holdout_nll.size(), 2u);
  model.validate();

  // Holdout delta-MSE against the exact system, fresh draws.
  double mse = 0;
  int count = 0;
  Rng probe(18, Stream::generic);
  for (int i = 0; i < 200; ++i) {
    const auto t = sys.sample(probe);
    for (int k = 0; k < cfg.members; ++k) {
      const auto pred = model_forward(model, k, Mat<double>(t.state.transpose()),
                                      Mat<double>(t.action.transpose()));
      const Vec<double> delta_true = t.next_state - t.state;
      mse += (pred.mean.row(0).head(3).transpose() - delta_true).squaredNorm() / 3.0;
      ++count;
    }
  }
  mse /= count;
  EXPECT_LT(mse, 1e-3);
}

TEST(TrainModel, DeterministicAndBootstrapsDiffer) {
  Rng sys_rng(19, Stream::generic);
  const auto sys = LinearSystem::make(3, 1, sys_rng);
  ReplayBuffer<double> buffer(1000, 3, 1);
  for (int i = 0; i < 400; ++i) buffer.push(sys.sample(sys_rng));

  ModelConfig cfg = small_model_cfg(5);
  cfg.max_batches_per_member = 20;
  auto run = [&] {
    Rng init(20, Stream::model_init);
    auto model = EnsembleModel<double>::make(3, 1, cfg, init);
    Rng fit(21, Stream::model_fit);
    train_model(model, buffer, 3, fit);
    return model;
  };
  const auto m1 = run();
  const auto m2 = run();
  for (int k = 0; k < 5; ++k)
    EXPECT_TRUE(m1.members[static_cast<std::size_t>(k)].net.layers[0].weight.isApprox(
        m2.members[static_cast<std::size_t>(k)].net.layers[0].weight, 0.0));

  // Distinct bootstraps push members apart.
  int distinct_pairs = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      if (!m1.members[static_cast<std::size_t>(i)].net.layers[0].weight.isApprox(
              m1.members[static_cast<std::size_t>(j)].net.layers[0].weight, 1e-12))
        ++distinct_pairs;
  EXPECT_EQ(distinct_pairs, 10);
}

TEST(TrainModel, NormalizationRoundTripsAndStaysPositive) {
  Rng sys_rng(22, Stream::generic);
  const auto sys = LinearSystem::make(3, 1, sys_rng);
  ReplayBuffer<double> buffer(1000, 3, 1);
  for (int i = 0; i < 300; ++i) buffer.push(sys.sample(sys_rng));
  auto model = make_model(23, small_model_cfg(1));
  Rng fit(24, Stream::model_fit);
  train_model(model, buffer, 1, fit);
  EXPECT_GT(model.in_std.minCoeff(), 0.0);

  Rng rng(25, Stream::generic);
  const Mat<double> x = rng.normal_mat<double>(6, 4);
  const Mat<double> back = denormalize_inputs(model, normalize_inputs(model, x));
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SampleMember, SingletonAndUniformFrequencies) {
  auto one = make_model(26, small_model_cfg(1));
  Rng rng(27, Stream::generic);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_member(one, rng), 0);

  auto five = make_model(28, small_model_cfg(5));
  std::vector<int> counts(5, 0);
  Rng freq_rng(29, Stream::generic);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(sample_member(five, freq_rng))];
  for (int k = 0; k < 5; ++k) {
    const double f = static_cast<double>(counts[static_cast<std::size_t>(k)]) / draws;
    EXPECT_GE(f, 0.19);
    EXPECT_LE(f, 0.21);
  }
}

TEST(ModelRollout, DeterministicReplay) {
  auto model = make_model(30, small_model_cfg(3));
  Rng rng(31, Stream::generic);
  const Mat<double> starts = rng.normal_mat<double>(4, 3);
  auto roll = [&](int seed) {
    Rng act(static_cast<std::uint64_t>(seed), Stream::target_actions);
    Rng noise(static_cast<std::uint64_t>(seed), Stream::target_noise);
    return model_rollout(model, starts, constant_policy(0.2), 3, act, noise);
  };
  const auto r1 = roll(5);
  const auto r2 = roll(5);
  for (std::size_t t = 0; t < r1.states.size(); ++t)
    EXPECT_TRUE(r1.states[t].isApprox(r2.states[t], 0.0));
  EXPECT_TRUE(r1.rewards.isApprox(r2.rewards, 0.0));
  r1.validate();
}

TEST(ModelRollout, BothMembersAppearAtEveryStep) {
  // Member 0 pushes every state coordinate down, member 1 up, with variance
  // pinned tiny; the sign of the step identifies the member.
  ModelConfig cfg = small_model_cfg(2);
  cfg.min_logvar_init = -30.0;
  cfg.max_logvar_init = -30.0 + 1e-9;
  auto model = make_model(32, cfg);
  for (int k = 0; k < 2; ++k) {
    zero_member(model.members[static_cast<std::size_t>(k)]);
    model.members[static_cast<std::size_t>(k)].net.layers.back().bias.head(3).setConstant(
        k == 0 ? -1.0 : 1.0);
  }
  const int B = 64, H = 3;
  Rng start_rng(33, Stream::generic);
  const Mat<double> starts = start_rng.normal_mat<double>(B, 3);
  Rng act(34, Stream::target_actions), noise(34, Stream::target_noise);
  const auto rb = model_rollout(model, starts, constant_policy(0.0), H, act, noise);
  for (int t = 0; t < H; ++t) {
    int up = 0, down = 0;
    for (int b = 0; b < B; ++b) {
      const double step = rb.states[static_cast<std::size_t>(t) + 1](b, 0) -
                          rb.states[static_cast<std::size_t>(t)](b, 0);
      (step > 0 ? up : down) += 1;
    }
    EXPECT_GT(up, 0) << "step " << t;
    EXPECT_GT(down, 0) << "step " << t;
  }
}

TEST(ModelRollout, PerTrajectoryModeKeepsMemberFixed) {
  ModelConfig cfg = small_model_cfg(2);
  cfg.resample = MemberResample::per_trajectory;
  cfg.min_logvar_init = -30.0;
  cfg.max_logvar_init = -30.0 + 1e-9;
  auto model = make_model(35, cfg);
  for (int k = 0; k < 2; ++k) {
    zero_member(model.members[static_cast<std::size_t>(k)]);
    model.members[static_cast<std::size_t>(k)].net.layers.back().bias.head(3).setConstant(
        k == 0 ? -1.0 : 1.0);
  }
  const int B = 32, H = 4;
  Rng start_rng(36, Stream::generic);
  const Mat<double> starts = start_rng.normal_mat<double>(B, 3);
  Rng act(37, Stream::target_actions), noise(37, Stream::target_noise);
  const auto rb = model_rollout(model, starts, constant_policy(0.0), H, act, noise);
  for (int b = 0; b < B; ++b) {
    const double first = rb.states[1](b, 0) - rb.states[0](b, 0);
    for (int t = 1; t < H; ++t) {
      const double step = rb.states[static_cast<std::size_t>(t) + 1](b, 0) -
                          rb.states[static_cast<std::size_t>(t)](b, 0);
      EXPECT_GT(step * first, 0.0) << "element " << b << " step " << t;
    }
  }
}

TEST(ModelRollout, NonFinitePredictionTruncatesWithZeroMasks) {
  auto model = make_model(38, small_model_cfg(1));
  zero_member(model.members[0]);
  model.members[0].net.layers.back().bias(0) =
      std::numeric_limits<double>::quiet_NaN();
  Rng start_rng(39, Stream::generic);
  const Mat<double> starts = start_rng.normal_mat<double>(4, 3);
  Rng act(40, Stream::target_actions), noise(40, Stream::target_noise);
  const auto rb = model_rollout(model, starts, constant_policy(0.0), 3, act, noise);
  EXPECT_EQ(rb.nonfinite_truncations, 4);
  EXPECT_TRUE(rb.masks.isZero(0.0));
  // States freeze at the last finite value; the batch stays usable.
  for (int t = 0; t <= 3; ++t)
    EXPECT_TRUE(rb.states[static_cast<std::size_t>(t)].isApprox(starts, 0.0));
  rb.validate();
}

TEST(ModelRollout, TrainedLinearModelTracksTrueStep) {
  Rng sys_rng(41, Stream::generic);
  const auto sys = LinearSystem::make(3, 1, sys_rng);
  ReplayBuffer<double> buffer(4000, 3, 1);
  for (int i = 0; i < 1500; ++i) buffer.push(sys.sample(sys_rng));

  ModelConfig cfg;
  cfg.members = 2;
  cfg.hidden_units = 64;
  cfg.min_fit = 256;
  cfg.max_batches_per_member = 100000;
  Rng init(42, Stream::model_init);
  auto model = EnsembleModel<double>::make(3, 1, cfg, init);
  Rng fit(43, Stream::model_fit);
  train_model(model, buffer, 80, fit);

  Rng start_rng(44, Stream::generic);
  const Mat<double> starts = start_rng.normal_mat<double>(16, 3);
  Rng act(45, Stream::target_actions), noise(45, Stream::target_noise);
  const auto rb = model_rollout(model, starts, constant_policy(0.4), 1, act, noise);
  for (int b = 0; b < 16; ++b) {
    const Vec<double> truth =
        sys.A * starts.row(b).transpose() + sys.B * Vec<double>::Constant(1, 0.4);
    EXPECT_LT((rb.states[1].row(b).transpose() - truth).norm(), 0.05) << "element " << b;
  }
}
