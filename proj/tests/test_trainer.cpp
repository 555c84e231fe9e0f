#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dssgrpo/trainer.hpp"

using namespace dssgrpo;

namespace {

constexpr TokenId F = vocab::kFiller;
constexpr TokenId TE = vocab::kThinkEnd;
constexpr TokenId AE = vocab::kAnswerEnd;

TrainConfig small_config(TrainMode mode = TrainMode::kDss) {
  TrainConfig cfg;
  cfg.group_size = 6;
  cfg.total_steps = 4;
  cfg.prompts_per_step = 4;
  cfg.n_ref_samples = 8;
  cfg.mode = mode;
  cfg.seed = 17;
  return cfg;
}

PolicyParams jittered_base(std::uint64_t seed, double scale = 0.3) {
  const auto spec = task_feature_spec();
  auto p = base_policy(spec);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& w : p.w) w += n(gen);
  return p;
}

// Independent recomputation of dss token weights for a hand-built group.
std::vector<std::vector<double>> oracle_weights(const std::vector<TokenSeq>& ys,
                                                const std::vector<int>& g,
                                                const std::vector<int>& thk,
                                                const std::vector<int>& ans,
                                                double l_ref, const RewardConfig& rc,
                                                double s, std::size_t cap) {
  const std::size_t k = ys.size();
  std::vector<double> lt;
  for (std::size_t i = 0; i < k; ++i) {
    if (g[i]) lt.push_back(thk[i]);
  }
  const bool minmax = lt.size() >= 3;
  double lo = 1e300, hi = -1e300;
  for (double x : lt) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::vector<double> re(k), rl(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!g[i]) continue;
    if (!minmax || thk[i] <= rc.margin_m) {
      re[i] = 1;
    } else {
      re[i] = std::clamp(1 - (thk[i] - lo) / (hi - lo + rc.eps), 0.0, 1.0);
    }
    const double up = l_ref + rc.band_f;
    if (ans[i] < l_ref) rl[i] = std::exp(-(l_ref - ans[i]) / l_ref);
    else if (ans[i] <= up) rl[i] = 1;
    else rl[i] = std::exp(-(ans[i] - up) / up);
  }
  auto norm = [&](const std::vector<double>& r) {
    double mu = 0, var = 0;
    for (double x : r) mu += x / k;
    for (double x : r) var += (x - mu) * (x - mu) / k;
    std::vector<double> a(k);
    for (std::size_t i = 0; i < k; ++i) a[i] = (r[i] - mu) / (std::sqrt(var) + 1e-4);
    return a;
  };
  double p = 0;
  for (int x : g) p += x;
  p /= k;
  auto at = norm(re);
  const auto aa = norm(rl);
  for (double& x : at) {
    if (x >= 0) x *= (2 - p) * s;
  }
  std::vector<std::vector<double>> w(k, std::vector<double>(cap, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    if (thk[i] == 0) continue;  // malformed
    for (int t = 0; t < thk[i]; ++t) w[i][t] = at[i];
    for (int t = thk[i]; t < thk[i] + ans[i]; ++t) w[i][t] = aa[i];
  }
  return w;
}

double batch_loss(const PolicyParams& p, const GroupBatch& b, const RoutedWeights& w) {
  return loss_and_grad(p, task_feature_spec(), b, w).loss;
}

}  // namespace

TEST(Rollout, DeterministicPerSeed) {
  const auto spec = task_feature_spec();
  const auto params = base_policy(spec);
  const auto task = generate_task(3, 5, 2);
  const auto a = rollout_group(params, spec, task, 8, 1.0, 64, 9, 3, 4.0);
  const auto b = rollout_group(params, spec, task, 8, 1.0, 64, 9, 3, 4.0);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(a.samples[k].tokens, b.samples[k].tokens);
  EXPECT_EQ(a.gates.g, b.gates.g);
  const auto c = rollout_group(params, spec, task, 8, 1.0, 64, 10, 3, 4.0);
  bool differs = false;
  for (std::size_t k = 0; k < 8; ++k) differs |= a.samples[k].tokens != c.samples[k].tokens;
  EXPECT_TRUE(differs);
}

TEST(GroupWeights, AllMalformedGivesNoSignal) {
  const auto task = make_task(0, {1, 2});
  const std::vector<TokenSeq> ys = {{F, F}, {AE}, {F, TE, 3}, {1, 2, 3}};
  const auto batch = make_batch(task, ys, 8, 3.0);
  for (TrainMode mode : {TrainMode::kDss, TrainMode::kNaive}) {
    const auto gw = compute_group_weights(batch, {}, mode);
    EXPECT_EQ(gw.p_succ, 0.0);
    EXPECT_EQ(gw.w_diff, 2.0);
    EXPECT_TRUE(gw.weights.all_zero());
  }
}

TEST(GroupWeights, WorkedExampleAgainstOracle) {
  const auto task = make_task(0, {3, 4});
  const std::vector<TokenSeq> ys = {
      {F, F, TE, 7, F, AE},
      {F, F, F, F, F, F, F, F, F, F, TE, 7, AE},
      {F, TE, 5, AE},
      {F, F, F, F, F, TE, 7, F, F, F, F, F, F, AE},
  };
  const std::vector<int> g = {1, 1, 0, 1}, thk = {3, 11, 2, 6}, ans = {3, 2, 2, 8};
  WeightConfig wc;
  wc.reward.margin_m = 2.0;
  const auto batch = make_batch(task, ys, 16, 2.0);
  EXPECT_EQ(batch.gates.g, g);
  const auto gw = compute_group_weights(batch, wc, TrainMode::kDss);
  EXPECT_DOUBLE_EQ(gw.p_succ, 0.75);
  EXPECT_DOUBLE_EQ(gw.w_diff, 1.25);
  EXPECT_TRUE(gw.rewards.used_minmax());
  const auto expect = oracle_weights(ys, g, thk, ans, 2.0, wc.reward, 1.5, 16);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 16; ++t) {
      EXPECT_NEAR(gw.weights.at(k, t), expect[k][t], 1e-12) << k << "," << t;
    }
  }
}

TEST(GroupWeights, PositiveThinkAdvantageScaledByWeightTimesS) {
  const auto task = make_task(0, {3, 4});
  const std::vector<TokenSeq> ys = {
      {F, F, TE, 7, AE}, {F, F, F, F, TE, 7, AE}, {F, TE, 5, AE}, {F, F, F, TE, 7, AE}};
  WeightConfig wc;
  wc.reward.margin_m = 1.0;
  const auto batch = make_batch(task, ys, 10, 1.0);
  const auto gw = compute_group_weights(batch, wc, TrainMode::kDss);
  ASSERT_DOUBLE_EQ(gw.p_succ, 0.75);
  const auto raw = group_relative_advantage(gw.rewards.r_eff, wc.eps_norm).adv;
  std::size_t positives = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    if (raw[k] > 0) {
      EXPECT_NEAR(gw.adv_thk[k], 1.875 * raw[k], 1e-15);
      ++positives;
    } else {
      EXPECT_EQ(gw.adv_thk[k], raw[k]);
    }
  }
  EXPECT_GT(positives, 0u);
}

TEST(GroupWeights, NaiveUsesOneWeightPerCompletion) {
  const auto spec = task_feature_spec();
  const auto params = base_policy(spec);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto task = generate_task(2 + static_cast<int>(s % 4), s, s);
    const auto batch = rollout_group(params, spec, task, 8, 1.0, 64, s, 0, 4.0);
    const auto gw = compute_group_weights(batch, {}, TrainMode::kNaive);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto& m = batch.samples[k].masks;
      for (std::size_t t = 0; t < batch.capacity; ++t) {
        EXPECT_EQ(gw.weights.at(k, t), m.val[t] ? gw.adv[k] : 0.0);
      }
    }
  }
}

// Answer-length shaping must not leak into think weights.
TEST(GroupWeights, ThinkWeightsIgnoreAnswerReward) {
  const auto spec = task_feature_spec();
  const auto params = jittered_base(3);
  std::size_t batches = 0;
  for (std::uint64_t s = 0; s < 120; ++s) {
    const auto task = generate_task(2 + static_cast<int>(s % 4), s, s);
    const auto batch = rollout_group(params, spec, task, 8, 1.0, 64, s, 0, 5.0);
    const auto gw = compute_group_weights(batch, {}, TrainMode::kDss);
    std::vector<SegmentMasks> masks;
    for (const auto& r : batch.samples) masks.push_back(r.masks);
    const std::vector<double> zeros(batch.size(), 0.0);
    const auto seg = segment_advantages(gw.rewards.r_eff, zeros);
    const auto w0 = route_advantages(scale_think_advantages(seg.thk.adv, gw.w_diff, 1.5),
                                     seg.ans.adv, masks);
    for (std::size_t k = 0; k < batch.size(); ++k) {
      for (std::size_t t = 0; t < batch.capacity; ++t) {
        if (masks[k].thk[t]) { EXPECT_EQ(gw.weights.at(k, t), w0.at(k, t)); }
        if (masks[k].ans[t]) { EXPECT_EQ(w0.at(k, t), 0.0); }
      }
    }
    ++batches;
  }
  EXPECT_GE(batches, 100u);
}

TEST(Loss, ZeroWeightsGiveZeroLossAndGradient) {
  const auto spec = task_feature_spec();
  const auto batch = make_batch(make_task(0, {1}), {{F, TE, 1, AE}, {F, AE}}, 6, 2.0);
  const auto lg = loss_and_grad(base_policy(spec), spec, batch, RoutedWeights(2, 6));
  EXPECT_EQ(lg.loss, 0.0);
  for (double g : lg.grad) EXPECT_EQ(g, 0.0);
}

TEST(Loss, SingleWeightedToken) {
  const auto spec = task_feature_spec();
  const auto params = jittered_base(1);
  const auto task = make_task(0, {4, 4});
  const auto batch = make_batch(task, {{F, F, TE, 8, AE}, {F, TE, 2, AE}}, 6, 2.0);
  RoutedWeights w(2, 6);
  w.at(0, 2) = 0.7;
  std::vector<double> phi(spec.feature_dim());
  DigitSumScratchpad summary(task);
  const TokenSeq prefix = {F, F};
  encode_features(spec, summary, prefix, phi);
  const double lp = log_prob(params, phi, TE);
  EXPECT_NEAR(loss_and_grad(params, spec, batch, w).loss, -0.7 / 2 * lp, 1e-14);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const auto spec = task_feature_spec();
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto params = jittered_base(10 + s);
    const auto task = generate_task(3, s, s);
    const auto batch = rollout_group(params, spec, task, 8, 1.2, 64, s, 0, 4.0);
    const auto weights = compute_group_weights(batch, {}, TrainMode::kDss).weights;
    const auto lg = loss_and_grad(params, spec, batch, weights);
    std::size_t here = 0;
    for (std::size_t i = 0; i < params.size() && here < 12; i += 7) {
      if (std::abs(lg.grad[i]) < 1e-4) continue;
      const double h = 1e-5, keep = params.w[i];
      params.w[i] = keep + h;
      const double up = batch_loss(params, batch, weights);
      params.w[i] = keep - h;
      const double down = batch_loss(params, batch, weights);
      params.w[i] = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_LT(std::abs(fd - lg.grad[i]) / std::abs(lg.grad[i]), 1e-5) << "coord " << i;
      ++here;
    }
    checked += here;
  }
  EXPECT_GE(checked, 20u);
}

TEST(Update, SgdEdgeCases) {
  auto p = jittered_base(2);
  const auto before = p;
  OptimizerState opt;
  std::vector<double> g(p.size(), 0.0);
  EXPECT_TRUE(apply_update(p, g, opt, 0.1));
  EXPECT_EQ(p, before);
  g.assign(p.size(), 1.0);
  EXPECT_TRUE(apply_update(p, g, opt, 0.0));
  EXPECT_EQ(p, before);
  g[5] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(apply_update(p, g, opt, 0.1));
  EXPECT_EQ(p, before);
  g[5] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(apply_update(p, g, opt, 0.1));
  EXPECT_EQ(p, before);
  EXPECT_THROW(apply_update(p, std::vector<double>(3), opt, 0.1), std::invalid_argument);
}

TEST(Update, SmallSgdStepDecreasesLoss) {
  const auto spec = task_feature_spec();
  auto params = jittered_base(4);
  const auto task = generate_task(4, 8, 1);
  const auto batch = rollout_group(params, spec, task, 8, 1.2, 64, 3, 0, 4.0);
  const auto weights = compute_group_weights(batch, {}, TrainMode::kDss).weights;
  ASSERT_FALSE(weights.all_zero());
  const auto lg = loss_and_grad(params, spec, batch, weights);
  OptimizerState opt;
  ASSERT_TRUE(apply_update(params, lg.grad, opt, 1e-3));
  EXPECT_LT(batch_loss(params, batch, weights), lg.loss);
}

TEST(Update, AdamFirstStepIsSignedLearningRate) {
  PolicyParams p(2, 3);
  OptimizerState opt;
  opt.kind = OptimizerKind::kAdam;
  const std::vector<double> g = {2.0, -0.5, 0.0, 1e-3, -3.0, 0.0};
  ASSERT_TRUE(apply_update(p, g, opt, 0.01));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double expect = g[i] == 0 ? 0.0 : -0.01 * (g[i] > 0 ? 1 : -1);
    EXPECT_NEAR(p.w[i], expect, 1e-7);
  }
  EXPECT_EQ(opt.t, 1);
}

TEST(Trainer, BitDeterministic) {
  Trainer a(small_config()), b(small_config());
  while (!a.done()) {
    const auto ra = a.run_step();
    const auto rb = b.run_step();
    EXPECT_EQ(ra.loss, rb.loss);
    EXPECT_EQ(ra.grad_norm, rb.grad_norm);
    ASSERT_EQ(a.params(), b.params());
  }
  EXPECT_TRUE(b.done());
  EXPECT_THROW(a.run_step(), std::logic_error);
}

TEST(Trainer, ReferencePolicyIsFrozen) {
  const auto base = base_policy(task_feature_spec());
  Trainer t(small_config());
  t.run_step();
  const auto first = t.reference().entries();
  ASSERT_FALSE(first.empty());
  while (!t.done()) t.run_step();
  EXPECT_EQ(t.reference_params(), base);
  EXPECT_NE(t.params(), base);
  for (const auto& [key, r] : first) EXPECT_EQ(t.reference().entries().at(key).l_ref, r.l_ref);
}

TEST(Trainer, StepReportInvariants) {
  auto cfg = small_config();
  Trainer t(cfg);
  while (!t.done()) {
    const long step = t.step();
    const auto rep = t.run_step();
    EXPECT_EQ(rep.step, step);
    EXPECT_DOUBLE_EQ(rep.temperature,
                     temperature_schedule(step, cfg.total_steps, cfg.tau_start, cfg.tau_end));
    ASSERT_EQ(rep.groups.size(), cfg.prompts_per_step);
    EXPECT_FALSE(rep.skipped);
    for (const auto& g : rep.groups) {
      EXPECT_GE(g.p_succ, 0.0);
      EXPECT_LE(g.p_succ, 1.0);
      EXPECT_DOUBLE_EQ(g.w_diff, 2.0 - g.p_succ);
      EXPECT_GE(g.l_ref, 1.0);
      EXPECT_GE(g.mean_r_eff, 0.0);
      EXPECT_LE(g.mean_r_eff, 1.0);
      EXPECT_NE(std::find(cfg.difficulties.begin(), cfg.difficulties.end(), g.difficulty),
                cfg.difficulties.end());
    }
  }
}

TEST(Trainer, PromptsDependOnlyOnSeedAndStep) {
  Trainer a(small_config());
  auto cfg = small_config();
  cfg.mode = TrainMode::kNaive;
  Trainer b(cfg);
  EXPECT_EQ(a.prompts_for_step(2), b.prompts_for_step(2));
  EXPECT_NE(a.prompts_for_step(2), a.prompts_for_step(3));
}

TEST(Trainer, NoGatedSamplesMeansNoUpdate) {
  const auto spec = task_feature_spec();
  PolicyParams degenerate(spec.feature_dim(), spec.vocab_size);
  degenerate.at(spec.in_think_index(), AE) = 60;
  for (TrainMode mode : {TrainMode::kDss, TrainMode::kNaive}) {
    Trainer t(small_config(mode), degenerate);
    const auto rep = t.run_step();
    EXPECT_EQ(rep.grad_norm, 0.0);
    for (const auto& g : rep.groups) EXPECT_EQ(g.p_succ, 0.0);
    EXPECT_EQ(t.params(), degenerate);
  }
}

TEST(Trainer, ConfigValidation) {
  auto bad = [](auto mutate) {
    auto cfg = small_config();
    mutate(cfg);
    return cfg;
  };
  EXPECT_THROW(Trainer(bad([](TrainConfig& c) { c.group_size = 1; })), std::invalid_argument);
  EXPECT_THROW(Trainer(bad([](TrainConfig& c) { c.difficulties.clear(); })),
               std::invalid_argument);
  EXPECT_THROW(Trainer(bad([](TrainConfig& c) { c.tau_end = 0; })), std::invalid_argument);
  EXPECT_THROW(Trainer(bad([](TrainConfig& c) { c.scale_s = -1; })), std::invalid_argument);
  EXPECT_THROW(Trainer(bad([](TrainConfig& c) { c.reward.eps = 0; })), std::invalid_argument);
  EXPECT_THROW(Trainer(small_config(), PolicyParams(3, 3)), std::invalid_argument);
}
