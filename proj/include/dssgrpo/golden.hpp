// Line-oriented golden vectors for conformance tests.
//
//   name | key=value | key=value | ...
//
// '#' starts a comment line. Lists are comma-separated; matrices separate
// rows with ';'. A routed-weights case carries the group inputs (returns,
// gates, segment boundaries) and the expected K x T token weights.

#ifndef DSSGRPO_GOLDEN_HPP_
#define DSSGRPO_GOLDEN_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dssgrpo/advantages.hpp"
#include "dssgrpo/rewards.hpp"
#include "dssgrpo/segmentation.hpp"
#include "dssgrpo/trainer.hpp"

namespace dssgrpo {

struct GoldenLine {
  std::string name;
  std::vector<std::pair<std::string, std::string>> fields;

  bool has(std::string_view key) const {
    for (const auto& [k, v] : fields) {
      if (k == key) return true;
    }
    return false;
  }
  const std::string& at(std::string_view key) const {
    for (const auto& [k, v] : fields) {
      if (k == key) return v;
    }
    throw std::invalid_argument("golden '" + name + "' has no field '" + std::string(key) + "'");
  }
};

namespace golden {

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto i = s.find(sep);
    out.push_back(strip(s.substr(0, i)));
    if (i == std::string_view::npos) return out;
    s.remove_prefix(i + 1);
  }
}

inline double to_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("bad number in golden: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<double> doubles(std::string_view s) {
  std::vector<double> out;
  if (strip(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(to_double(part));
  return out;
}

inline std::vector<int> ints(std::string_view s) {
  std::vector<int> out;
  for (double d : doubles(s)) {
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) throw std::invalid_argument("expected integer in golden");
    out.push_back(i);
  }
  return out;
}

inline std::vector<std::vector<double>> matrix(std::string_view s) {
  std::vector<std::vector<double>> out;
  for (auto row : split(s, ';')) out.push_back(doubles(row));
  return out;
}

inline std::string number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, p);
}

template <class Seq>
std::string join(const Seq& v, char sep = ',') {
  std::string s;
  bool first = true;
  for (const auto& x : v) {
    if (!first) s += sep;
    first = false;
    s += number(static_cast<double>(x));
  }
  return s;
}

}  // namespace golden

inline std::optional<GoldenLine> parse_golden_line(std::string_view line) {
  line = golden::strip(line);
  if (line.empty() || line.front() == '#') return std::nullopt;
  const auto parts = golden::split(line, '|');
  GoldenLine g;
  g.name = std::string(parts.front());
  if (g.name.empty()) throw std::invalid_argument("golden line without a name");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("golden field without '=' in '" + g.name + "'");
    }
    g.fields.emplace_back(std::string(golden::strip(parts[i].substr(0, eq))),
                          std::string(golden::strip(parts[i].substr(eq + 1))));
  }
  return g;
}

inline std::vector<GoldenLine> read_golden_lines(std::istream& is) {
  std::vector<GoldenLine> out;
  std::string line;
  while (std::getline(is, line)) {
    if (auto g = parse_golden_line(line)) out.push_back(std::move(*g));
  }
  return out;
}

inline void write_golden_line(std::ostream& os, const GoldenLine& g) {
  os << g.name;
  for (const auto& [k, v] : g.fields) os << " | " << k << '=' << v;
  os << '\n';
}

// ---------------------------------------------------------------------------
// Reward cases: "name | fn=<gate|p_succ|w_diff|r_eff|r_len|range> | inputs |
// expected=<value>". Range cases expect "lo:hi" or "absent".

/// |library - expected| for one reward case; infinity if a range case
/// disagrees on whether min-max shaping engages.
inline double reward_golden_deviation(const GoldenLine& g) {
  const std::string& fn = g.at("fn");
  if (fn == "range") {
    const auto r = think_length_range(golden::doubles(g.at("lengths")), golden::ints(g.at("g")));
    if (g.at("expected") == "absent") {
      return r ? std::numeric_limits<double>::infinity() : 0.0;
    }
    if (!r) return std::numeric_limits<double>::infinity();
    const auto parts = golden::split(g.at("expected"), ':');
    return std::max(std::abs(r->l_min - golden::to_double(parts.at(0))),
                    std::abs(r->l_max - golden::to_double(parts.at(1))));
  }
  double got = 0.0;
  if (fn == "gate") {
    got = quality_gate(g.at("fmt") == "1", g.at("corr") == "1");
  } else if (fn == "p_succ") {
    got = group_success_rate(golden::ints(g.at("g")));
  } else if (fn == "w_diff") {
    got = difficulty_weight(golden::to_double(g.at("p")));
  } else if (fn == "r_eff") {
    RewardConfig cfg;
    cfg.margin_m = golden::to_double(g.at("m"));
    cfg.eps = golden::to_double(g.at("eps"));
    std::optional<ThinkRange> range;
    if (g.has("range")) {
      const auto parts = golden::split(g.at("range"), ':');
      range = ThinkRange{golden::to_double(parts.at(0)), golden::to_double(parts.at(1))};
    }
    got = efficiency_reward(golden::to_double(g.at("l")), golden::ints(g.at("g")).at(0), range,
                            cfg);
  } else if (fn == "r_len") {
    RewardConfig cfg;
    cfg.band_f = golden::to_double(g.at("f"));
    got = answer_length_reward(golden::to_double(g.at("l")), golden::ints(g.at("g")).at(0),
                               golden::to_double(g.at("l_ref")), cfg);
  } else {
    throw std::invalid_argument("golden '" + g.name + "': unknown fn '" + fn + "'");
  }
  return std::abs(got - golden::to_double(g.at("expected")));
}

// ---------------------------------------------------------------------------
// Routed-weights cases

struct RoutedCase {
  std::string name;
  TrainMode mode = TrainMode::kDss;
  double scale_s = 1.5;
  double eps_norm = kDefaultEpsNorm;
  std::vector<int> gates;
  std::vector<double> r_think;
  std::vector<double> r_answer;  // unused in naive mode
  std::vector<SegmentBoundaries> bounds;
  std::size_t capacity = 0;
  std::vector<std::vector<double>> expected;  // K rows of T, empty if unknown
};

// bounds field: per sample "tau_thk:tau_end", or "-" for a malformed sample.
inline RoutedCase routed_case_from(const GoldenLine& g) {
  RoutedCase c;
  c.name = g.name;
  const auto& mode = g.at("mode");
  if (mode == "dss") c.mode = TrainMode::kDss;
  else if (mode == "naive") c.mode = TrainMode::kNaive;
  else throw std::invalid_argument("golden '" + g.name + "': bad mode");
  c.scale_s = golden::to_double(g.at("s"));
  c.eps_norm = golden::to_double(g.at("eps_norm"));
  c.gates = golden::ints(g.at("gates"));
  c.r_think = golden::doubles(g.at("r_think"));
  if (g.has("r_answer")) c.r_answer = golden::doubles(g.at("r_answer"));
  c.capacity = static_cast<std::size_t>(golden::to_double(g.at("T")));
  for (auto b : golden::split(g.at("bounds"), ',')) {
    SegmentBoundaries sb;
    if (b != "-") {
      const auto parts = golden::split(b, ':');
      if (parts.size() != 2) throw std::invalid_argument("golden '" + g.name + "': bad bounds");
      sb.tau_thk = static_cast<std::size_t>(golden::to_double(parts[0]));
      sb.tau_end = static_cast<std::size_t>(golden::to_double(parts[1]));
      sb.think_found = sb.answer_found = true;
    }
    c.bounds.push_back(sb);
  }
  if (g.has("expected")) c.expected = golden::matrix(g.at("expected"));
  const std::size_t k = c.gates.size();
  if (c.r_think.size() != k || c.bounds.size() != k ||
      (c.mode == TrainMode::kDss && c.r_answer.size() != k) ||
      (!c.expected.empty() && c.expected.size() != k)) {
    throw std::invalid_argument("golden '" + g.name + "': inconsistent group size");
  }
  return c;
}

inline GoldenLine to_golden_line(const RoutedCase& c) {
  GoldenLine g;
  g.name = c.name;
  g.fields.emplace_back("mode", std::string(to_string(c.mode)));
  g.fields.emplace_back("s", golden::number(c.scale_s));
  g.fields.emplace_back("eps_norm", golden::number(c.eps_norm));
  g.fields.emplace_back("gates", golden::join(c.gates));
  g.fields.emplace_back("r_think", golden::join(c.r_think));
  if (c.mode == TrainMode::kDss) g.fields.emplace_back("r_answer", golden::join(c.r_answer));
  std::string b;
  for (std::size_t k = 0; k < c.bounds.size(); ++k) {
    if (k) b += ',';
    b += c.bounds[k].complete() ? std::to_string(c.bounds[k].tau_thk) + ":" +
                                      std::to_string(c.bounds[k].tau_end)
                                : "-";
  }
  g.fields.emplace_back("bounds", b);
  g.fields.emplace_back("T", std::to_string(c.capacity));
  if (!c.expected.empty()) {
    std::string e;
    for (std::size_t k = 0; k < c.expected.size(); ++k) {
      if (k) e += ';';
      e += golden::join(c.expected[k]);
    }
    g.fields.emplace_back("expected", e);
  }
  return g;
}

/// Library evaluation of a case: difficulty weight from the gates, segment
/// advantages, asymmetric think scaling, mask routing.
inline RoutedWeights compute_routed(const RoutedCase& c) {
  std::vector<SegmentMasks> masks;
  for (const auto& b : c.bounds) masks.push_back(build_masks(b, c.capacity));
  if (c.mode == TrainMode::kNaive) {
    return broadcast_advantages(group_relative_advantage(c.r_think, c.eps_norm).adv, masks);
  }
  const double w = difficulty_weight(group_success_rate(c.gates));
  const auto seg = segment_advantages(c.r_think, c.r_answer, c.eps_norm);
  return route_advantages(scale_think_advantages(seg.thk.adv, w, c.scale_s), seg.ans.adv,
                          masks);
}

inline RoutedCase with_computed_expected(RoutedCase c) {
  const RoutedWeights w = compute_routed(c);
  c.expected.assign(w.group_size(), {});
  for (std::size_t k = 0; k < w.group_size(); ++k) {
    const auto row = w.row(k);
    c.expected[k].assign(row.begin(), row.end());
  }
  return c;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_GOLDEN_HPP_
