// One DSS-GRPO update per step: sample prompt groups, gate and score the
// completions, build segment-routed token weights, take a gradient step on
// the weighted log-likelihood loss. The naive GRPO baseline runs through the
// same plumbing and differs only in how token weights are built.

#ifndef DSSGRPO_TRAINER_HPP_
#define DSSGRPO_TRAINER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dssgrpo/advantages.hpp"
#include "dssgrpo/environment.hpp"
#include "dssgrpo/policy.hpp"
#include "dssgrpo/rewards.hpp"
#include "dssgrpo/rng.hpp"
#include "dssgrpo/segmentation.hpp"

namespace dssgrpo {

enum class TrainMode { kDss, kNaive };
enum class OptimizerKind { kSgd, kAdam };

inline std::string_view to_string(TrainMode m) {
  return m == TrainMode::kDss ? "dss" : "naive";
}
inline std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}
inline std::string_view to_string(ScheduleKind k) {
  return k == ScheduleKind::kCosine ? "cosine" : "fixed";
}

struct TrainConfig {
  std::size_t group_size = 8;
  long total_steps = 300;
  std::size_t prompts_per_step = 16;
  std::vector<int> difficulties = {2, 3, 4, 5};  // drawn uniformly
  double scale_s = 1.5;
  RewardConfig reward;
  double eps_norm = kDefaultEpsNorm;
  double tau_start = 1.3;
  double tau_end = 0.7;
  ScheduleKind schedule = ScheduleKind::kCosine;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  TrainMode mode = TrainMode::kDss;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 64;
  std::size_t n_ref_samples = 32;
  double ref_temperature = 1.0;
  double default_l_ref = 4.0;
  long checkpoint_every = 100;

  void validate() const {
    if (group_size < 2) throw std::invalid_argument("K must be >= 2");
    if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
    if (prompts_per_step < 1) throw std::invalid_argument("prompts_per_step must be >= 1");
    if (difficulties.empty()) throw std::invalid_argument("difficulty list is empty");
    for (int d : difficulties) {
      if (d < 1) throw std::invalid_argument("difficulties must be >= 1");
    }
    if (!(scale_s > 0.0)) throw std::invalid_argument("scale s must be > 0");
    reward.validate();
    if (!(eps_norm > 0.0)) throw std::invalid_argument("eps_norm must be > 0");
    if (!(tau_start > 0.0) || !(tau_end > 0.0)) {
      throw std::invalid_argument("temperatures must be > 0");
    }
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
    if (max_new_tokens < 2) throw std::invalid_argument("max_new_tokens must be >= 2");
    if (n_ref_samples < 1) throw std::invalid_argument("n_ref_samples must be >= 1");
    if (!(ref_temperature > 0.0)) throw std::invalid_argument("ref_temperature must be > 0");
    if (!(default_l_ref >= 1.0)) throw std::invalid_argument("default_l_ref must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  }

  ReferenceConfig reference_config() const {
    return {n_ref_samples, ref_temperature, default_l_ref, max_new_tokens};
  }
};

// ---------------------------------------------------------------------------
// Rollouts

struct Rollout {
  TokenSeq tokens;
  SegmentBoundaries bounds;
  SegmentMasks masks;
  SegmentLengths lengths;
  VerifierResult verdict;
};

struct GroupBatch {
  TaskInstance task;
  std::vector<Rollout> samples;
  GateVector gates;
  double l_ref = 1.0;
  std::size_t capacity = 0;  // T

  std::size_t size() const { return samples.size(); }
};

/// Segments, masks and verifies an already-sampled completion.
inline Rollout analyze_completion(TokenSeq tokens, const TaskInstance& task,
                                  std::size_t capacity) {
  validate_tokens(tokens, vocab::kSize, capacity);
  Rollout r;
  r.tokens = std::move(tokens);
  r.bounds = find_boundaries(r.tokens, vocab::kThinkEnd, vocab::kAnswerEnd);
  r.masks = build_masks(r.bounds, capacity);
  r.lengths = segment_lengths(r.masks);
  r.verdict = verify(r.tokens, r.bounds, task, capacity);
  return r;
}

/// Builds a batch (gates included) from completions; used by rollout_group
/// and by tests that hand-construct groups.
inline GroupBatch make_batch(const TaskInstance& task, std::vector<TokenSeq> completions,
                             std::size_t capacity, double l_ref) {
  GroupBatch batch;
  batch.task = task;
  batch.capacity = capacity;
  batch.l_ref = l_ref;
  std::vector<bool> fmt, corr;
  for (auto& y : completions) {
    batch.samples.push_back(analyze_completion(std::move(y), task, capacity));
    fmt.push_back(batch.samples.back().verdict.fmt_ok);
    corr.push_back(batch.samples.back().verdict.corr_ok);
  }
  batch.gates = make_gates(fmt, corr);
  return batch;
}

inline std::uint64_t rollout_seed(std::uint64_t run_seed, long step, std::uint64_t instance_id,
                                  std::size_t sample) {
  return derive_seed({run_seed, static_cast<std::uint64_t>(Stream::kRollout),
                      static_cast<std::uint64_t>(step), instance_id, sample});
}

inline GroupBatch rollout_group(const PolicyParams& params, const FeatureSpec& spec,
                                const TaskInstance& task, std::size_t group_size,
                                double temperature, std::size_t max_new_tokens,
                                std::uint64_t run_seed, long step, double l_ref) {
  DigitSumScratchpad summary(task);
  std::vector<TokenSeq> ys;
  ys.reserve(group_size);
  for (std::size_t k = 0; k < group_size; ++k) {
    SamplingConfig sc{temperature, max_new_tokens,
                      rollout_seed(run_seed, step, task.instance_id, k)};
    ys.push_back(sample_completion(params, spec, summary, sc));
  }
  return make_batch(task, std::move(ys), max_new_tokens, l_ref);
}

// ---------------------------------------------------------------------------
// Token weights

struct WeightConfig {
  RewardConfig reward;
  double eps_norm = kDefaultEpsNorm;
  double scale_s = 1.5;
};

struct GroupWeights {
  double p_succ = 0.0;
  double w_diff = 1.0;
  std::size_t n_gated = 0;
  GroupRewards rewards;
  std::vector<double> adv_thk;  // after asymmetric scaling in dss mode
  std::vector<double> adv_ans;  // dss mode only
  std::vector<double> adv;      // naive mode only
  RoutedWeights weights;
};

inline GroupWeights compute_group_weights(const GroupBatch& batch, const WeightConfig& cfg,
                                          TrainMode mode) {
  const std::size_t k_size = batch.size();
  if (k_size < 2) throw std::invalid_argument("group needs K >= 2 completions");
  GroupWeights out;
  const auto& g = batch.gates.g;
  out.p_succ = group_success_rate(g);
  out.w_diff = difficulty_weight(out.p_succ);
  out.n_gated = gated_count(g);

  std::vector<double> l_thk(k_size), l_ans(k_size);
  std::vector<SegmentMasks> masks;
  masks.reserve(k_size);
  for (std::size_t k = 0; k < k_size; ++k) {
    l_thk[k] = static_cast<double>(batch.samples[k].lengths.thk);
    l_ans[k] = static_cast<double>(batch.samples[k].lengths.ans);
    masks.push_back(batch.samples[k].masks);
  }
  out.rewards = group_rewards(l_thk, l_ans, g, batch.l_ref, cfg.reward);

  if (mode == TrainMode::kNaive) {
    // Completion-level return: gate and think shaping only, broadcast to
    // every valid token, no difficulty scaling.
    out.adv = group_relative_advantage(out.rewards.r_eff, cfg.eps_norm).adv;
    out.weights = broadcast_advantages(out.adv, masks);
    return out;
  }
  const auto seg = segment_advantages(out.rewards.r_eff, out.rewards.r_len, cfg.eps_norm);
  out.adv_thk = scale_think_advantages(seg.thk.adv, out.w_diff, cfg.scale_s);
  out.adv_ans = seg.ans.adv;
  out.weights = route_advantages(out.adv_thk, out.adv_ans, masks);
  return out;
}

// ---------------------------------------------------------------------------
// Loss

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d W, same layout as PolicyParams::w
};

/// loss = -(1/K) sum_k sum_t A_t^(k) log pi(y_t^(k) | x, y_<t^(k)) at
/// temperature 1, with its analytic gradient.
inline LossGrad loss_and_grad(const PolicyParams& params, const FeatureSpec& spec,
                              const GroupBatch& batch, const RoutedWeights& weights) {
  if (weights.group_size() != batch.size() || weights.capacity() != batch.capacity) {
    throw std::invalid_argument("weight matrix does not match batch dimensions");
  }
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(batch.size());
  DigitSumScratchpad summary(batch.task);
  std::vector<double> phi(spec.feature_dim());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TokenSeq& y = batch.samples[k].tokens;
    const auto row = weights.row(k);
    for (std::size_t t = 0; t < y.size(); ++t) {
      const double a = row[t];
      if (a == 0.0) continue;
      encode_features(spec, summary, std::span<const TokenId>(y.data(), t), phi);
      // Gradient of -(a/K) log pi.
      const double lp =
          accumulate_log_prob_gradient(params, phi, y[t], -a * inv_k, out.grad);
      out.loss -= a * inv_k * lp;
    }
  }
  return out;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One descent step on `params`. A non-finite gradient leaves everything
/// untouched and returns false.
inline bool apply_update(PolicyParams& params, std::span<const double> grad,
                         OptimizerState& opt, double lr) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("gradient size does not match parameters");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) return false;
  }
  if (opt.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < grad.size(); ++i) params.w[i] -= lr * grad[i];
    return true;
  }
  if (opt.m.size() != grad.size()) {
    opt.m.assign(grad.size(), 0.0);
    opt.v.assign(grad.size(), 0.0);
  }
  ++opt.t;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grad[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
    params.w[i] -= lr * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + opt.eps);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Training loop

struct GroupReport {
  std::uint64_t instance_id = 0;
  int difficulty = 0;
  double p_succ = 0.0;
  double w_diff = 1.0;
  std::size_t n_gated = 0;
  bool used_minmax = false;
  double l_ref = 0.0;
  double mean_l_thk = 0.0;  // over well-formed samples
  double mean_l_ans = 0.0;
  double mean_r_eff = 0.0;
  double mean_r_len = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct StepReport {
  long step = 0;
  double temperature = 0.0;
  double loss = 0.0;
  double grad_norm = 0.0;
  bool skipped = false;  // non-finite gradient, update not applied
  std::vector<GroupReport> groups;
};

inline GroupReport summarize_group(const GroupBatch& batch, const GroupWeights& gw,
                                   double loss, double grad_norm) {
  GroupReport r;
  r.instance_id = batch.task.instance_id;
  r.difficulty = batch.task.difficulty();
  r.p_succ = gw.p_succ;
  r.w_diff = gw.w_diff;
  r.n_gated = gw.n_gated;
  r.used_minmax = gw.rewards.used_minmax();
  r.l_ref = batch.l_ref;
  std::size_t n_ok = 0;
  for (const auto& s : batch.samples) {
    if (!s.bounds.complete()) continue;
    ++n_ok;
    r.mean_l_thk += static_cast<double>(s.lengths.thk);
    r.mean_l_ans += static_cast<double>(s.lengths.ans);
  }
  if (n_ok > 0) {
    r.mean_l_thk /= static_cast<double>(n_ok);
    r.mean_l_ans /= static_cast<double>(n_ok);
  }
  const double inv_k = 1.0 / static_cast<double>(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    r.mean_r_eff += gw.rewards.r_eff[k] * inv_k;
    r.mean_r_len += gw.rewards.r_len[k] * inv_k;
  }
  r.loss = loss;
  r.grad_norm = grad_norm;
  return r;
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : Trainer(cfg, base_policy(task_feature_spec())) {}

  Trainer(TrainConfig cfg, PolicyParams initial)
      : cfg_((cfg.validate(), std::move(cfg))),
        spec_(task_feature_spec()),
        params_(std::move(initial)),
        reference_(params_, spec_, cfg_.reference_config(), cfg_.seed) {
    if (params_.feature_dim != spec_.feature_dim() ||
        params_.vocab_size != spec_.vocab_size) {
      throw std::invalid_argument("initial parameters do not match feature spec");
    }
    opt_.kind = cfg_.optimizer;
    opt_.beta1 = cfg_.adam_beta1;
    opt_.beta2 = cfg_.adam_beta2;
    opt_.eps = cfg_.adam_eps;
  }

  const TrainConfig& config() const { return cfg_; }
  const FeatureSpec& spec() const { return spec_; }
  const PolicyParams& params() const { return params_; }
  const PolicyParams& reference_params() const { return reference_.frozen(); }
  ReferenceCache& reference() { return reference_; }
  long step() const { return step_; }
  bool done() const { return step_ >= cfg_.total_steps; }

  WeightConfig weight_config() const { return {cfg_.reward, cfg_.eps_norm, cfg_.scale_s}; }

  double temperature_at(long step) const {
    return scheduled_temperature(cfg_.schedule, step, cfg_.total_steps, cfg_.tau_start,
                                 cfg_.tau_end);
  }

  /// The prompts of a step depend only on (seed, step).
  std::vector<TaskInstance> prompts_for_step(long step) const {
    std::vector<TaskInstance> out;
    out.reserve(cfg_.prompts_per_step);
    for (std::size_t i = 0; i < cfg_.prompts_per_step; ++i) {
      const std::uint64_t id = static_cast<std::uint64_t>(step) * cfg_.prompts_per_step + i;
      Rng rng(derive_seed({cfg_.seed, static_cast<std::uint64_t>(Stream::kPrompt), id}));
      const int d = cfg_.difficulties[rng.below(cfg_.difficulties.size())];
      out.push_back(generate_task(d, rng.below(~std::uint64_t{0}), id));
    }
    return out;
  }

  GroupBatch rollout(const TaskInstance& task, long step) {
    const double l_ref = reference_.get(task).l_ref;
    return rollout_group(params_, spec_, task, cfg_.group_size, temperature_at(step),
                         cfg_.max_new_tokens, cfg_.seed, step, l_ref);
  }

  /// Hook to observe each step's batches and weights before the update.
  using BatchObserver =
      std::function<void(long step, const std::vector<GroupBatch>&,
                         const std::vector<GroupWeights>&)>;

  StepReport run_step(const BatchObserver& observer = {}) {
    if (done()) throw std::logic_error("training already finished");
    StepReport rep;
    rep.step = step_;
    rep.temperature = temperature_at(step_);
    const auto prompts = prompts_for_step(step_);
    std::vector<GroupBatch> batches;
    std::vector<GroupWeights> weights;
    batches.reserve(prompts.size());
    weights.reserve(prompts.size());
    for (const auto& task : prompts) {
      batches.push_back(rollout(task, step_));
      weights.push_back(compute_group_weights(batches.back(), weight_config(), cfg_.mode));
    }
    if (observer) observer(step_, batches, weights);

    std::vector<double> total(params_.size(), 0.0);
    const double inv_p = 1.0 / static_cast<double>(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) {
      const LossGrad lg = loss_and_grad(params_, spec_, batches[i], weights[i].weights);
      for (std::size_t j = 0; j < total.size(); ++j) total[j] += lg.grad[j] * inv_p;
      rep.loss += lg.loss * inv_p;
      rep.groups.push_back(summarize_group(batches[i], weights[i], lg.loss, l2_norm(lg.grad)));
    }
    rep.grad_norm = l2_norm(total);
    rep.skipped = !apply_update(params_, total, opt_, cfg_.learning_rate);
    ++step_;
    return rep;
  }

 private:
  TrainConfig cfg_;
  FeatureSpec spec_;
  PolicyParams params_;
  ReferenceCache reference_;
  OptimizerState opt_;
  long step_ = 0;
};

}  // namespace dssgrpo

#endif  // DSSGRPO_TRAINER_HPP_
