// Evaluation and length statistics.
//
// Lengths are measured on well-formed samples only (both markers present);
// per-prompt means come first and dataset values are means over prompts.

#ifndef DSSGRPO_METRICS_HPP_
#define DSSGRPO_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dssgrpo/environment.hpp"
#include "dssgrpo/policy.hpp"
#include "dssgrpo/rng.hpp"
#include "dssgrpo/segmentation.hpp"

namespace dssgrpo {

struct BucketStats {
  std::size_t n_prompts = 0;
  std::size_t n_samples = 0;
  std::size_t n_length_prompts = 0;  // prompts with >= 1 well-formed sample
  double pass_rate = 0.0;            // mean per-sample correctness
  double mean_l_thk = 0.0;
  double mean_l_ans = 0.0;
  double mean_l_ref = 0.0;     // 0 when no reference was supplied
  double answer_ratio = 0.0;   // mean_l_ans / mean_l_ref over length prompts
};

struct EvalSummary {
  std::size_t n_per_prompt = 0;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  std::map<int, BucketStats> by_difficulty;
  BucketStats overall;
  // Well-formed sample lengths, for histograms.
  std::vector<double> think_lengths;
  std::vector<double> answer_lengths;
};

struct EvalConfig {
  std::size_t n_per_prompt = 8;
  double temperature = 0.7;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 64;
};

struct PromptEval {
  double pass_rate = 0.0;
  bool has_lengths = false;
  double mean_l_thk = 0.0;
  double mean_l_ans = 0.0;
  double l_ref = 0.0;
};

namespace detail {

struct BucketAccumulator {
  std::size_t prompts = 0, samples = 0, length_prompts = 0;
  double pass = 0.0, thk = 0.0, ans = 0.0, ref = 0.0;

  void add(const PromptEval& p, std::size_t n) {
    ++prompts;
    samples += n;
    pass += p.pass_rate;
    if (p.has_lengths) {
      ++length_prompts;
      thk += p.mean_l_thk;
      ans += p.mean_l_ans;
      ref += p.l_ref;
    }
  }

  BucketStats finish() const {
    BucketStats s;
    s.n_prompts = prompts;
    s.n_samples = samples;
    s.n_length_prompts = length_prompts;
    if (prompts > 0) s.pass_rate = pass / static_cast<double>(prompts);
    if (length_prompts > 0) {
      const double n = static_cast<double>(length_prompts);
      s.mean_l_thk = thk / n;
      s.mean_l_ans = ans / n;
      s.mean_l_ref = ref / n;
      if (s.mean_l_ref > 0.0) s.answer_ratio = s.mean_l_ans / s.mean_l_ref;
    }
    return s;
  }
};

}  // namespace detail

/// `reference` may be null; answer ratios are then left at zero.
inline EvalSummary evaluate(const PolicyParams& params, const FeatureSpec& spec,
                            std::span<const TaskInstance> tasks, const EvalConfig& cfg,
                            ReferenceCache* reference = nullptr) {
  if (tasks.empty()) throw std::invalid_argument("evaluation task set is empty");
  if (cfg.n_per_prompt < 1) throw std::invalid_argument("N must be >= 1");
  EvalSummary out;
  out.n_per_prompt = cfg.n_per_prompt;
  out.temperature = cfg.temperature;
  out.seed = cfg.seed;
  std::map<int, detail::BucketAccumulator> buckets;
  detail::BucketAccumulator all;
  for (const auto& task : tasks) {
    DigitSumScratchpad summary(task);
    PromptEval pe;
    std::size_t n_ok = 0, n_corr = 0;
    for (std::size_t i = 0; i < cfg.n_per_prompt; ++i) {
      SamplingConfig sc{cfg.temperature, cfg.max_new_tokens,
                        derive_seed({cfg.seed, static_cast<std::uint64_t>(Stream::kEval),
                                     task.instance_id, prompt_key(task), i})};
      const TokenSeq y = sample_completion(params, spec, summary, sc);
      const auto b = find_boundaries(y, spec.think_end, spec.answer_end);
      const auto v = verify(y, b, task, cfg.max_new_tokens);
      if (v.corr_ok) ++n_corr;
      if (b.complete()) {
        ++n_ok;
        const auto l = segment_lengths(build_masks(b, cfg.max_new_tokens));
        pe.mean_l_thk += static_cast<double>(l.thk);
        pe.mean_l_ans += static_cast<double>(l.ans);
        out.think_lengths.push_back(static_cast<double>(l.thk));
        out.answer_lengths.push_back(static_cast<double>(l.ans));
      }
    }
    pe.pass_rate = static_cast<double>(n_corr) / static_cast<double>(cfg.n_per_prompt);
    if (n_ok > 0) {
      pe.has_lengths = true;
      pe.mean_l_thk /= static_cast<double>(n_ok);
      pe.mean_l_ans /= static_cast<double>(n_ok);
    }
    if (reference) pe.l_ref = reference->get(task).l_ref;
    buckets[task.difficulty()].add(pe, cfg.n_per_prompt);
    all.add(pe, cfg.n_per_prompt);
  }
  for (const auto& [d, acc] : buckets) out.by_difficulty[d] = acc.finish();
  out.overall = all.finish();
  return out;
}

// ---------------------------------------------------------------------------
// Histograms

enum class SegmentTag { kThink, kAnswer };

inline std::string to_string(SegmentTag t) {
  return t == SegmentTag::kThink ? "think" : "answer";
}

struct LengthHistogram {
  SegmentTag segment = SegmentTag::kThink;
  double bin_width = 1.0;
  std::vector<double> edges;  // bin i covers [edges[i], edges[i+1])
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

/// Fixed-width bins from 0 up to the bin holding the largest length.
inline LengthHistogram length_histogram(std::span<const double> lengths, double bin_width,
                                        SegmentTag segment = SegmentTag::kThink) {
  if (!(bin_width >= 1.0)) throw std::invalid_argument("bin width must be >= 1");
  LengthHistogram h;
  h.segment = segment;
  h.bin_width = bin_width;
  if (lengths.empty()) return h;
  const double max_len = *std::max_element(lengths.begin(), lengths.end());
  if (*std::min_element(lengths.begin(), lengths.end()) < 0.0) {
    throw std::invalid_argument("negative length");
  }
  const auto n_bins = static_cast<std::size_t>(std::floor(max_len / bin_width)) + 1;
  h.counts.assign(n_bins, 0);
  for (std::size_t i = 0; i <= n_bins; ++i) h.edges.push_back(bin_width * static_cast<double>(i));
  for (double l : lengths) ++h.counts[static_cast<std::size_t>(std::floor(l / bin_width))];
  return h;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two equal-length series of size >= 2");
  }
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dssgrpo

#endif  // DSSGRPO_METRICS_HPP_
