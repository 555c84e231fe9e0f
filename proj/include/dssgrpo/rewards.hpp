// Gated structural rewards for one prompt group: the quality gate, group
// success rate, difficulty weight, think-compression reward and
// answer-length-alignment reward.

#ifndef DSSGRPO_REWARDS_HPP_
#define DSSGRPO_REWARDS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace dssgrpo {

struct RewardConfig {
  double margin_m = 8.0;  // think plateau, tokens
  double band_f = 4.0;    // answer tolerance band, tokens
  double eps = 1e-6;      // min-max denominator guard
  // Min-max shaping needs strictly more than (min_gated_for_minmax - 1)
  // gated samples; the default of 3 means |G| > 2.
  std::size_t min_gated_for_minmax = 3;

  void validate() const {
    if (!(margin_m >= 0.0) || !(band_f >= 0.0)) {
      throw std::invalid_argument("reward margin and band must be >= 0");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("reward eps must be > 0");
    if (min_gated_for_minmax < 1) {
      throw std::invalid_argument("min_gated_for_minmax must be >= 1");
    }
  }
};

struct ThinkRange {
  double l_min = 0.0;
  double l_max = 0.0;
};

struct GateVector {
  std::vector<int> g;
  std::vector<bool> fmt_ok;
  std::vector<bool> corr_ok;

  std::size_t size() const { return g.size(); }
};

struct GroupRewards {
  std::vector<double> r_eff;
  std::vector<double> r_len;
  std::optional<ThinkRange> range;  // engaged iff min-max shaping was used

  bool used_minmax() const { return range.has_value(); }
};

inline int quality_gate(bool fmt_ok, bool corr_ok) {
  return (fmt_ok && corr_ok) ? 1 : 0;
}

inline GateVector make_gates(const std::vector<bool>& fmt_ok,
                             const std::vector<bool>& corr_ok) {
  if (fmt_ok.size() != corr_ok.size()) {
    throw std::invalid_argument("gate component sizes differ");
  }
  GateVector gv;
  gv.fmt_ok = fmt_ok;
  gv.corr_ok = corr_ok;
  gv.g.reserve(fmt_ok.size());
  for (std::size_t k = 0; k < fmt_ok.size(); ++k) {
    gv.g.push_back(quality_gate(fmt_ok[k], corr_ok[k]));
  }
  return gv;
}

inline std::size_t gated_count(std::span<const int> g) {
  return static_cast<std::size_t>(std::count(g.begin(), g.end(), 1));
}

inline double group_success_rate(std::span<const int> g) {
  if (g.empty()) throw std::invalid_argument("group size must be >= 1");
  return static_cast<double>(gated_count(g)) / static_cast<double>(g.size());
}

inline double difficulty_weight(double p_succ) {
  if (!(p_succ >= 0.0 && p_succ <= 1.0)) {
    throw std::invalid_argument("success rate outside [0, 1]");
  }
  return 2.0 - p_succ;
}

inline std::optional<ThinkRange> think_length_range(
    std::span<const double> think_lengths, std::span<const int> g,
    std::size_t min_gated = 3) {
  if (think_lengths.size() != g.size()) {
    throw std::invalid_argument("length and gate vectors differ in size");
  }
  if (gated_count(g) < min_gated) return std::nullopt;
  ThinkRange r{0.0, 0.0};
  bool first = true;
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g[k] != 1) continue;
    if (first) {
      r.l_min = r.l_max = think_lengths[k];
      first = false;
    } else {
      r.l_min = std::min(r.l_min, think_lengths[k]);
      r.l_max = std::max(r.l_max, think_lengths[k]);
    }
  }
  return r;
}

// The margin plateau is checked before the min-max branch, so a short gated
// sample earns 1 even when a range exists.
inline double efficiency_reward(double l_thk, int g,
                                const std::optional<ThinkRange>& range,
                                const RewardConfig& cfg) {
  if (g == 0) return 0.0;
  if (!range) return 1.0;
  if (l_thk <= cfg.margin_m) return 1.0;
  const double r =
      1.0 - (l_thk - range->l_min) / (range->l_max - range->l_min + cfg.eps);
  return std::clamp(r, 0.0, 1.0);
}

inline double answer_length_reward(double l_ans, int g, double l_ref,
                                   const RewardConfig& cfg) {
  if (!(l_ref >= 1.0)) throw std::invalid_argument("reference length must be >= 1");
  if (g == 0) return 0.0;
  const double upper = l_ref + cfg.band_f;
  if (l_ans < l_ref) return std::exp(-(l_ref - l_ans) / l_ref);
  if (l_ans <= upper) return 1.0;
  return std::exp(-(l_ans - upper) / upper);
}

// All per-sample rewards for one group. `l_ref` is the prompt's frozen
// reference answer length.
inline GroupRewards group_rewards(std::span<const double> l_thk,
                                  std::span<const double> l_ans,
                                  std::span<const int> g, double l_ref,
                                  const RewardConfig& cfg) {
  const std::size_t k_size = g.size();
  if (l_thk.size() != k_size || l_ans.size() != k_size) {
    throw std::invalid_argument("group vectors differ in size");
  }
  GroupRewards out;
  out.range = think_length_range(l_thk, g, cfg.min_gated_for_minmax);
  out.r_eff.resize(k_size);
  out.r_len.resize(k_size);
  for (std::size_t k = 0; k < k_size; ++k) {
    out.r_eff[k] = efficiency_reward(l_thk[k], g[k], out.range, cfg);
    out.r_len[k] = answer_length_reward(l_ans[k], g[k], l_ref, cfg);
  }
  return out;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_REWARDS_HPP_
