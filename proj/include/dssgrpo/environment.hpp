// Synthetic think/answer task: the answer is the sum of the prompt digits
// modulo 10.
//
// The policy reads the prompt one digit per think token through a scratchpad
// summary. When the think segment ends, the first answer position sees the
// running digit sum of the digits consumed so far; a think segment with fewer
// than D content tokens therefore exposes a partial sum and the answer is
// usually wrong. D (the number of digits) is the difficulty knob.

#ifndef DSSGRPO_ENVIRONMENT_HPP_
#define DSSGRPO_ENVIRONMENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dssgrpo/policy.hpp"
#include "dssgrpo/rng.hpp"
#include "dssgrpo/segmentation.hpp"

namespace dssgrpo {

namespace vocab {
inline constexpr int kNumDigits = 10;
inline constexpr TokenId kFiller = 10;
inline constexpr TokenId kThinkEnd = 11;
inline constexpr TokenId kAnswerEnd = 12;
inline constexpr TokenId kPad = 13;
inline constexpr int kSize = 14;

inline constexpr bool is_digit(TokenId id) { return id >= 0 && id < kNumDigits; }
}  // namespace vocab

struct TaskInstance {
  std::uint64_t instance_id = 0;
  std::vector<int> digits;
  int target_digit = 0;

  int difficulty() const { return static_cast<int>(digits.size()); }
  std::string digit_string() const {
    std::string s;
    for (int d : digits) s.push_back(static_cast<char>('0' + d));
    return s;
  }
  bool operator==(const TaskInstance&) const = default;
};

inline TaskInstance make_task(std::uint64_t id, std::vector<int> digits) {
  if (digits.empty()) throw std::invalid_argument("task needs at least one digit");
  int sum = 0;
  for (int d : digits) {
    if (d < 0 || d > 9) throw std::invalid_argument("task digit outside 0..9");
    sum += d;
  }
  return TaskInstance{id, std::move(digits), sum % 10};
}

inline TaskInstance generate_task(int difficulty, std::uint64_t seed,
                                  std::uint64_t id = 0) {
  if (difficulty < 1) throw std::invalid_argument("difficulty must be >= 1");
  Rng rng(seed);
  std::vector<int> digits(static_cast<std::size_t>(difficulty));
  for (int& d : digits) d = static_cast<int>(rng.below(10));
  return make_task(id, std::move(digits));
}

// ---------------------------------------------------------------------------
// Feature summary

/// Summary block: [running-sum one-hot (10) | all digits consumed (1)].
/// The running-sum one-hot is set only at the first answer position.
class DigitSumScratchpad {
 public:
  static constexpr int kDim = 11;
  static constexpr int kDoneIndex = 10;

  explicit DigitSumScratchpad(const TaskInstance& task) : task_(&task) {}

  int summary_dim() const { return kDim; }

  void summarize(std::span<const TokenId> prefix, std::span<double> out) const {
    const auto te = std::find(prefix.begin(), prefix.end(), vocab::kThinkEnd);
    const bool in_answer = te != prefix.end();
    const std::size_t think_tokens =
        in_answer ? static_cast<std::size_t>(te - prefix.begin()) : prefix.size();
    const std::size_t consumed =
        std::min<std::size_t>(think_tokens, task_->digits.size());
    if (consumed == task_->digits.size()) out[kDoneIndex] = 1.0;
    if (in_answer && te + 1 == prefix.end()) {
      int sum = 0;
      for (std::size_t i = 0; i < consumed; ++i) sum += task_->digits[i];
      out[sum % 10] = 1.0;
    }
  }

 private:
  const TaskInstance* task_;
};

inline FeatureSpec task_feature_spec() {
  FeatureSpec spec;
  spec.vocab_size = vocab::kSize;
  spec.n_buckets = 16;
  spec.bucket_width = 2;
  spec.summary_dim = DigitSumScratchpad::kDim;
  spec.start_token = vocab::kPad;
  spec.think_end = vocab::kThinkEnd;
  spec.answer_end = vocab::kAnswerEnd;
  return spec;
}

/// Step-0 weights: a template-following base that already maps the running
/// sum to the answer digit, thinks for a while and writes a padded answer.
struct BasePrior {
  double think_filler = 3.0;
  double think_digit = -2.0;
  double think_end_at0 = -1.5;  // think_end logit at think position 0
  double think_end_slope = 0.15;  // per token of think position
  double answer_filler = 2.0;
  double answer_digit = -2.5;
  // Flat answer hazard: answer lengths are roughly geometric.
  double answer_end_at0 = 0.0;
  double answer_end_slope = 0.0;
  double sum_to_digit = 4.0;
  double first_answer_filler = -3.0;
  double first_answer_end = -6.0;
  double forbidden = -8.0;  // pad anywhere, answer_end in think, think_end in answer
};

inline PolicyParams base_policy(const FeatureSpec& spec, const BasePrior& prior = {}) {
  spec.validate();
  PolicyParams p(spec.feature_dim(), spec.vocab_size);
  const int it = spec.in_think_index();
  const int ia = spec.in_answer_index();
  for (int d = 0; d < vocab::kNumDigits; ++d) {
    p.at(it, d) = prior.think_digit;
    p.at(ia, d) = prior.answer_digit;
    p.at(spec.summary_offset() + d, d) = prior.sum_to_digit;
  }
  p.at(it, vocab::kFiller) = prior.think_filler;
  p.at(it, vocab::kThinkEnd) = prior.think_end_at0;
  p.at(it, vocab::kAnswerEnd) = prior.forbidden;
  p.at(it, vocab::kPad) = prior.forbidden;
  p.at(ia, vocab::kFiller) = prior.answer_filler;
  p.at(ia, vocab::kAnswerEnd) = prior.answer_end_at0;
  p.at(ia, vocab::kThinkEnd) = prior.forbidden;
  p.at(ia, vocab::kPad) = prior.forbidden;
  const int first = spec.prev_offset() + vocab::kThinkEnd;
  p.at(first, vocab::kFiller) = prior.first_answer_filler;
  p.at(first, vocab::kAnswerEnd) = prior.first_answer_end;
  for (int b = 0; b < spec.n_buckets; ++b) {
    // Bucket centre in tokens.
    const double pos = (b + 0.5) * spec.bucket_width - 0.5;
    p.at(spec.bucket_offset() + b, vocab::kThinkEnd) = prior.think_end_slope * pos;
    p.at(spec.bucket_offset() + b, vocab::kAnswerEnd) = prior.answer_end_slope * pos;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Verifier

enum class VerifyReason {
  kOk,
  kMissingThinkEnd,
  kMissingAnswerEnd,
  kEmptyAnswer,
  kWrongDigit,
  kTruncated,
};

inline std::string_view to_string(VerifyReason r) {
  switch (r) {
    case VerifyReason::kOk: return "ok";
    case VerifyReason::kMissingThinkEnd: return "missing_think_end";
    case VerifyReason::kMissingAnswerEnd: return "missing_answer_end";
    case VerifyReason::kEmptyAnswer: return "empty_answer";
    case VerifyReason::kWrongDigit: return "wrong_digit";
    case VerifyReason::kTruncated: return "truncated";
  }
  return "unknown";
}

struct FormatCheck {
  bool ok = false;
  VerifyReason reason = VerifyReason::kOk;
};

struct VerifierResult {
  bool fmt_ok = false;
  bool corr_ok = false;
  VerifyReason reason = VerifyReason::kOk;
};

/// A sequence that reached max_new_tokens without answer_end is truncated.
inline FormatCheck check_format(std::span<const TokenId> seq,
                                const SegmentBoundaries& b,
                                std::size_t max_new_tokens) {
  const bool hit_limit = seq.size() >= max_new_tokens &&
                         (seq.empty() || seq.back() != vocab::kAnswerEnd);
  if (!b.think_found) {
    return {false, hit_limit ? VerifyReason::kTruncated : VerifyReason::kMissingThinkEnd};
  }
  if (!b.answer_found) {
    return {false, hit_limit ? VerifyReason::kTruncated : VerifyReason::kMissingAnswerEnd};
  }
  if (b.tau_end == b.tau_thk + 1) return {false, VerifyReason::kEmptyAnswer};
  return {true, VerifyReason::kOk};
}

/// First digit token of the answer segment must equal the target.
inline bool check_correct(std::span<const TokenId> seq, const SegmentBoundaries& b,
                          const TaskInstance& task) {
  if (!b.complete()) {
    throw std::logic_error("correctness checked on a malformed completion");
  }
  for (std::size_t t = b.tau_thk; t + 1 < b.tau_end; ++t) {
    if (vocab::is_digit(seq[t])) return seq[t] == task.target_digit;
  }
  return false;
}

inline VerifierResult verify(std::span<const TokenId> seq, const SegmentBoundaries& b,
                             const TaskInstance& task, std::size_t max_new_tokens) {
  const FormatCheck fmt = check_format(seq, b, max_new_tokens);
  if (!fmt.ok) return {false, false, fmt.reason};
  const bool corr = check_correct(seq, b, task);
  return {true, corr, corr ? VerifyReason::kOk : VerifyReason::kWrongDigit};
}

// ---------------------------------------------------------------------------
// Reference answer lengths from the frozen step-0 policy

struct ReferenceLengths {
  double l_ref = 0.0;
  std::size_t samples = 0;
  std::size_t gated = 0;
  bool fallback = false;
};

struct ReferenceConfig {
  std::size_t n_samples = 32;
  double temperature = 1.0;
  double default_l_ref = 4.0;
  std::size_t max_new_tokens = 64;
};

/// Rounded mean answer length over gated samples of a fixed length list;
/// falls back to `default_l_ref` when nothing was gated.
inline ReferenceLengths reference_from_samples(std::span<const double> gated_answer_lengths,
                                               std::size_t total_samples,
                                               double default_l_ref) {
  ReferenceLengths r;
  r.samples = total_samples;
  r.gated = gated_answer_lengths.size();
  if (r.gated == 0) {
    r.l_ref = default_l_ref;
    r.fallback = true;
    return r;
  }
  double sum = 0.0;
  for (double l : gated_answer_lengths) sum += l;
  r.l_ref = std::max(1.0, std::round(sum / static_cast<double>(r.gated)));
  return r;
}

inline std::uint64_t prompt_key(const TaskInstance& task) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (int d : task.digits) h = splitmix64(h ^ static_cast<std::uint64_t>(d + 1));
  return splitmix64(h ^ task.digits.size());
}

/// Sample streams depend only on (seed, prompt contents, sample index), so
/// the estimate for a prompt is the same whenever it is first requested.
inline ReferenceLengths estimate_reference_length(const PolicyParams& frozen,
                                                  const FeatureSpec& spec,
                                                  const TaskInstance& task,
                                                  const ReferenceConfig& cfg,
                                                  std::uint64_t seed) {
  if (cfg.n_samples < 1) throw std::invalid_argument("n_ref_samples must be >= 1");
  DigitSumScratchpad summary(task);
  std::vector<double> gated_lengths;
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    SamplingConfig sc{cfg.temperature, cfg.max_new_tokens,
                      derive_seed({seed, static_cast<std::uint64_t>(Stream::kReference),
                                   prompt_key(task), i})};
    const TokenSeq y = sample_completion(frozen, spec, summary, sc);
    const auto b = find_boundaries(y, vocab::kThinkEnd, vocab::kAnswerEnd);
    const auto v = verify(y, b, task, cfg.max_new_tokens);
    if (v.fmt_ok && v.corr_ok) {
      gated_lengths.push_back(static_cast<double>(b.tau_end - b.tau_thk));
    }
  }
  return reference_from_samples(gated_lengths, cfg.n_samples, cfg.default_l_ref);
}

/// Write-once cache of reference lengths keyed by prompt contents.
class ReferenceCache {
 public:
  ReferenceCache(PolicyParams frozen, FeatureSpec spec, ReferenceConfig cfg,
                 std::uint64_t seed)
      : frozen_(std::move(frozen)), spec_(spec), cfg_(cfg), seed_(seed) {}

  const ReferenceLengths& get(const TaskInstance& task) {
    const std::string key = task.digit_string();
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, estimate_reference_length(frozen_, spec_, task, cfg_, seed_))
               .first;
    }
    return it->second;
  }

  const PolicyParams& frozen() const { return frozen_; }
  std::size_t size() const { return cache_.size(); }
  const std::map<std::string, ReferenceLengths>& entries() const { return cache_; }

 private:
  PolicyParams frozen_;
  FeatureSpec spec_;
  ReferenceConfig cfg_;
  std::uint64_t seed_;
  std::map<std::string, ReferenceLengths> cache_;
};

// ---------------------------------------------------------------------------
// Task sets: one instance per line, "<id> <difficulty> <digits> <target>",
// e.g. "7 3 492 5". Lines starting with '#' are comments.

inline void write_task_set(std::ostream& os, std::span<const TaskInstance> tasks) {
  for (const auto& t : tasks) {
    os << t.instance_id << ' ' << t.difficulty() << ' ' << t.digit_string() << ' '
       << t.target_digit << '\n';
  }
}

inline std::vector<TaskInstance> read_task_set(std::istream& is) {
  std::vector<TaskInstance> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::uint64_t id = 0;
    int difficulty = 0, target = -1;
    std::string digits;
    if (!(ls >> id >> difficulty >> digits >> target)) {
      throw std::runtime_error("task set line " + std::to_string(lineno) + ": malformed");
    }
    std::vector<int> ds;
    for (char c : digits) {
      if (c < '0' || c > '9') {
        throw std::runtime_error("task set line " + std::to_string(lineno) +
                                 ": non-digit in prompt");
      }
      ds.push_back(c - '0');
    }
    TaskInstance t = make_task(id, std::move(ds));
    if (t.difficulty() != difficulty || t.target_digit != target) {
      throw std::runtime_error("task set line " + std::to_string(lineno) +
                               ": difficulty or target inconsistent with digits");
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

/// `per_difficulty` instances for each listed difficulty, ids counting from 0.
inline std::vector<TaskInstance> make_task_set(std::span<const int> difficulties,
                                               std::size_t per_difficulty,
                                               std::uint64_t seed) {
  std::vector<TaskInstance> tasks;
  std::uint64_t id = 0;
  for (int d : difficulties) {
    for (std::size_t i = 0; i < per_difficulty; ++i, ++id) {
      tasks.push_back(generate_task(
          d, derive_seed({seed, static_cast<std::uint64_t>(Stream::kTaskSet), id}), id));
    }
  }
  return tasks;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_ENVIRONMENT_HPP_
