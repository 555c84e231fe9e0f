// Linear-softmax autoregressive policy with analytic log-probability
// gradients, temperature sampling and the temperature schedule.
//
// The context feature vector phi(x, y_<t) is the concatenation of
//   [ prev-token one-hot | segment-position bucket one-hot | task summary |
//     in-think, in-answer ]
// and logits are W^T phi with W of shape feature_dim x vocab_size. The
// position bucket counts tokens already emitted in the current segment, so
// think and answer share the same position rows.

#ifndef DSSGRPO_POLICY_HPP_
#define DSSGRPO_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dssgrpo/rng.hpp"
#include "dssgrpo/segmentation.hpp"

namespace dssgrpo {

struct FeatureSpec {
  int vocab_size = 14;
  int n_buckets = 12;
  int bucket_width = 1;
  int summary_dim = 0;
  TokenId start_token = 13;  // context id standing in for "no previous token"
  TokenId think_end = 11;
  TokenId answer_end = 12;

  int prev_offset() const { return 0; }
  int bucket_offset() const { return vocab_size; }
  int summary_offset() const { return vocab_size + n_buckets; }
  int in_think_index() const { return vocab_size + n_buckets + summary_dim; }
  int in_answer_index() const { return in_think_index() + 1; }
  int feature_dim() const { return in_answer_index() + 1; }

  void validate() const {
    if (vocab_size < 2 || n_buckets < 1 || bucket_width < 1 || summary_dim < 0) {
      throw std::invalid_argument("invalid feature spec dimensions");
    }
    for (TokenId id : {start_token, think_end, answer_end}) {
      if (id < 0 || id >= vocab_size) {
        throw std::invalid_argument("feature spec token id outside vocabulary");
      }
    }
    if (think_end == answer_end) {
      throw std::invalid_argument("boundary markers must be distinct");
    }
  }

  std::string describe() const {
    std::ostringstream os;
    os << "linear-softmax v1 vocab=" << vocab_size << " buckets=" << n_buckets
       << "x" << bucket_width << " summary=" << summary_dim
       << " start=" << start_token << " think_end=" << think_end
       << " answer_end=" << answer_end;
    return os.str();
  }

  // FNV-1a over describe(); recorded in checkpoints.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : describe()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

/// Weight matrix, row-major: row = feature, column = token.
struct PolicyParams {
  int feature_dim = 0;
  int vocab_size = 0;
  std::vector<double> w;

  PolicyParams() = default;
  PolicyParams(int features, int vocab)
      : feature_dim(features), vocab_size(vocab),
        w(static_cast<std::size_t>(features) * vocab, 0.0) {}

  double& at(int i, int v) { return w[static_cast<std::size_t>(i) * vocab_size + v]; }
  double at(int i, int v) const {
    return w[static_cast<std::size_t>(i) * vocab_size + v];
  }
  std::size_t size() const { return w.size(); }

  bool all_finite() const {
    return std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); });
  }
  bool operator==(const PolicyParams&) const = default;
};

/// Produces the task-defined summary block of the features. `prefix` is y_<t.
template <typename S>
concept ContextSummarizer = requires(const S& s, std::span<const TokenId> prefix,
                                     std::span<double> out) {
  { s.summary_dim() } -> std::convertible_to<int>;
  s.summarize(prefix, out);
};

/// A summarizer contributing nothing; useful for tests of the bare policy.
struct NoSummary {
  int summary_dim() const { return 0; }
  void summarize(std::span<const TokenId>, std::span<double>) const {}
};

template <ContextSummarizer S>
void encode_features(const FeatureSpec& spec, const S& summarizer,
                     std::span<const TokenId> prefix, std::span<double> out) {
  if (static_cast<int>(out.size()) != spec.feature_dim()) {
    throw std::invalid_argument("feature buffer has wrong dimension");
  }
  std::fill(out.begin(), out.end(), 0.0);
  const TokenId prev = prefix.empty() ? spec.start_token : prefix.back();
  out[spec.prev_offset() + prev] = 1.0;

  const auto te = std::find(prefix.begin(), prefix.end(), spec.think_end);
  const bool in_answer = te != prefix.end();
  const std::size_t seg_pos =
      in_answer ? static_cast<std::size_t>(prefix.end() - te - 1) : prefix.size();
  const int bucket = static_cast<int>(
      std::min<std::size_t>(seg_pos / spec.bucket_width, spec.n_buckets - 1));
  out[spec.bucket_offset() + bucket] = 1.0;

  summarizer.summarize(prefix, out.subspan(spec.summary_offset(), spec.summary_dim));
  out[in_answer ? spec.in_answer_index() : spec.in_think_index()] = 1.0;
}

inline void check_dims(const PolicyParams& params, std::span<const double> phi) {
  if (static_cast<int>(phi.size()) != params.feature_dim) {
    throw std::invalid_argument("feature dimension does not match parameters");
  }
}

inline std::vector<double> logits(const PolicyParams& params,
                                  std::span<const double> phi) {
  check_dims(params, phi);
  std::vector<double> z(params.vocab_size, 0.0);
  for (int i = 0; i < params.feature_dim; ++i) {
    const double f = phi[i];
    if (f == 0.0) continue;
    const double* row = &params.w[static_cast<std::size_t>(i) * params.vocab_size];
    for (int v = 0; v < params.vocab_size; ++v) z[v] += f * row[v];
  }
  return z;
}

/// Softmax of z / temperature, max-shifted.
inline std::vector<double> softmax(std::span<const double> z, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t v = 0; v < z.size(); ++v) {
    p[v] = std::exp((z[v] - zmax) / temperature);
    total += p[v];
  }
  for (double& x : p) x /= total;
  return p;
}

inline double log_sum_exp(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - zmax);
  return zmax + std::log(s);
}

inline void check_token(const PolicyParams& params, TokenId token) {
  if (token < 0 || token >= params.vocab_size) {
    throw std::invalid_argument("token id outside vocabulary");
  }
}

/// log pi(token | context) at temperature 1.
inline double log_prob(const PolicyParams& params, std::span<const double> phi,
                       TokenId token) {
  check_token(params, token);
  const auto z = logits(params, phi);
  return z[token] - log_sum_exp(z);
}

/// Accumulates scale * d log pi(token) / dW = scale * phi (onehot - softmax)^T
/// into `grad` (same layout as params.w). Returns log pi(token).
inline double accumulate_log_prob_gradient(const PolicyParams& params,
                                           std::span<const double> phi,
                                           TokenId token, double scale,
                                           std::span<double> grad) {
  check_token(params, token);
  if (grad.size() != params.size()) {
    throw std::invalid_argument("gradient buffer has wrong size");
  }
  const auto z = logits(params, phi);
  const auto p = softmax(z);
  const double lp = z[token] - log_sum_exp(z);
  if (scale == 0.0) return lp;
  for (int i = 0; i < params.feature_dim; ++i) {
    const double f = phi[i];
    if (f == 0.0) continue;
    double* row = &grad[static_cast<std::size_t>(i) * params.vocab_size];
    for (int v = 0; v < params.vocab_size; ++v) {
      row[v] += scale * f * ((v == token ? 1.0 : 0.0) - p[v]);
    }
  }
  return lp;
}

inline std::vector<double> log_prob_gradient(const PolicyParams& params,
                                             std::span<const double> phi,
                                             TokenId token) {
  std::vector<double> g(params.size(), 0.0);
  accumulate_log_prob_gradient(params, phi, token, 1.0, g);
  return g;
}

/// Inverse-CDF draw from softmax(z / temperature).
inline TokenId sample_token(std::span<const double> z, double temperature, Rng& rng) {
  const auto p = softmax(z, temperature);
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    c += p[v];
    if (u < c) return static_cast<TokenId>(v);
  }
  // u landed in the rounding slack above the last partial sum.
  for (std::size_t v = p.size(); v-- > 0;) {
    if (p[v] > 0.0) return static_cast<TokenId>(v);
  }
  return 0;
}

struct SamplingConfig {
  double temperature = 1.0;
  std::size_t max_new_tokens = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  }
};

/// Ancestral sampling until answer_end or max_new_tokens.
template <ContextSummarizer S>
TokenSeq sample_completion(const PolicyParams& params, const FeatureSpec& spec,
                           const S& summarizer, const SamplingConfig& cfg) {
  cfg.validate();
  if (params.feature_dim != spec.feature_dim() || params.vocab_size != spec.vocab_size) {
    throw std::invalid_argument("parameters do not match feature spec");
  }
  Rng rng(cfg.seed);
  TokenSeq y;
  y.reserve(cfg.max_new_tokens);
  std::vector<double> phi(spec.feature_dim());
  while (y.size() < cfg.max_new_tokens) {
    encode_features(spec, summarizer, y, phi);
    const TokenId tok = sample_token(logits(params, phi), cfg.temperature, rng);
    y.push_back(tok);
    if (tok == spec.answer_end) break;
  }
  return y;
}

enum class ScheduleKind { kCosine, kFixed };

/// Half-cosine from tau_start (step 0) to tau_end (step total_steps).
inline double temperature_schedule(long step, long total_steps, double tau_start,
                                   double tau_end) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw std::invalid_argument("schedule step out of range");
  }
  const double u = static_cast<double>(step) / static_cast<double>(total_steps);
  return tau_end + 0.5 * (tau_start - tau_end) * (1.0 + std::cos(std::numbers::pi * u));
}

inline double scheduled_temperature(ScheduleKind kind, long step, long total_steps,
                                    double tau_start, double tau_end) {
  if (kind == ScheduleKind::kFixed) return tau_end;
  return temperature_schedule(step, total_steps, tau_start, tau_end);
}

// ---------------------------------------------------------------------------
// Checkpoints: a short text header followed by the flat weight array, one
// value per line in round-trip precision.
//
//   dssgrpo-checkpoint 1
//   feature_dim <int>
//   vocab_size <int>
//   spec_hash <16 hex digits>
//   step <int>
//   <feature_dim * vocab_size values, row-major>

struct Checkpoint {
  PolicyParams params;
  std::uint64_t spec_hash = 0;
  long step = 0;
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << "dssgrpo-checkpoint 1\n"
     << "feature_dim " << ck.params.feature_dim << "\n"
     << "vocab_size " << ck.params.vocab_size << "\n"
     << "spec_hash " << std::hex << std::setw(16) << std::setfill('0') << ck.spec_hash
     << std::dec << std::setfill(' ') << "\n"
     << "step " << ck.step << "\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (double x : ck.params.w) os << x << "\n";
}

inline Checkpoint read_checkpoint(std::istream& is) {
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(is >> k) || k != key) {
      throw std::runtime_error("checkpoint: expected '" + key + "'");
    }
  };
  expect("dssgrpo-checkpoint");
  int version = 0;
  is >> version;
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  Checkpoint ck;
  int fd = 0, vs = 0;
  expect("feature_dim");
  is >> fd;
  expect("vocab_size");
  is >> vs;
  if (!is || fd <= 0 || vs <= 0) throw std::runtime_error("checkpoint: bad dimensions");
  expect("spec_hash");
  std::string hex;
  is >> hex;
  ck.spec_hash = std::stoull(hex, nullptr, 16);
  expect("step");
  is >> ck.step;
  ck.params = PolicyParams(fd, vs);
  for (double& x : ck.params.w) {
    if (!(is >> x)) throw std::runtime_error("checkpoint: truncated weight array");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace dssgrpo

#endif  // DSSGRPO_POLICY_HPP_
