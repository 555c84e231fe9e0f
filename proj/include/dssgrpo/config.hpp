// Run configuration: a flat `key = value` file with '#' comments. Every
// TrainConfig field has exactly one key; the same table drives file
// parsing, CLI overrides and the config echo in run manifests.

#ifndef DSSGRPO_CONFIG_HPP_
#define DSSGRPO_CONFIG_HPP_

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dssgrpo/trainer.hpp"

namespace dssgrpo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    throw ConfigError("bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return v;
}

inline std::size_t parse_count(std::string_view key, std::string_view text) {
  return parse_number<std::size_t>(key, text);
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

inline std::vector<int> parse_int_list(std::string_view key, std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_number<int>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("empty list for '" + std::string(key) + "'");
  return out;
}

inline std::string format_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::format_double;
  using detail::parse_count;
  using detail::parse_number;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    // Accessors are generic lambdas so one works for const and mutable configs.
    auto add = [&k](std::string name, std::string help, auto access, auto parse, auto show) {
      k.push_back({name, std::move(help),
                   [access, parse, name](TrainConfig& c, std::string_view v) {
                     access(c) = parse(name, v);
                   },
                   [access, show](const TrainConfig& c) { return show(access(c)); }});
    };
    auto count = [&](std::string name, std::string help, auto access) {
      add(std::move(name), std::move(help), access, parse_count,
          [](std::size_t v) { return std::to_string(v); });
    };
    auto integer = [&](std::string name, std::string help, auto access) {
      add(std::move(name), std::move(help), access, parse_number<long>,
          [](long v) { return std::to_string(v); });
    };
    auto real = [&](std::string name, std::string help, auto access) {
      add(std::move(name), std::move(help), access, parse_number<double>, format_double);
    };

    count("K", "group size", [](auto& c) -> auto& { return c.group_size; });
    integer("total_steps", "training steps", [](auto& c) -> auto& { return c.total_steps; });
    count("prompts_per_step", "prompt groups per step",
          [](auto& c) -> auto& { return c.prompts_per_step; });
    k.push_back({"difficulties", "comma-separated digit counts, drawn uniformly",
                 [](TrainConfig& c, std::string_view v) {
                   c.difficulties = detail::parse_int_list("difficulties", v);
                 },
                 [](const TrainConfig& c) { return detail::format_int_list(c.difficulties); }});
    real("s", "difficulty scale on positive think advantages",
         [](auto& c) -> auto& { return c.scale_s; });
    real("margin_m", "think-length plateau (tokens)",
         [](auto& c) -> auto& { return c.reward.margin_m; });
    real("band_f", "answer tolerance band (tokens)",
         [](auto& c) -> auto& { return c.reward.band_f; });
    real("eps", "min-max denominator guard",
         [](auto& c) -> auto& { return c.reward.eps; });
    count("min_gated_for_minmax", "gated samples needed for min-max shaping",
          [](auto& c) -> auto& { return c.reward.min_gated_for_minmax; });
    real("eps_norm", "advantage normalisation constant",
         [](auto& c) -> auto& { return c.eps_norm; });
    real("tau_start", "sampling temperature at step 0",
         [](auto& c) -> auto& { return c.tau_start; });
    real("tau_end", "sampling temperature at the last step",
         [](auto& c) -> auto& { return c.tau_end; });
    k.push_back({"schedule", "cosine | fixed",
                 [](TrainConfig& c, std::string_view v) {
                   if (v == "cosine") c.schedule = ScheduleKind::kCosine;
                   else if (v == "fixed") c.schedule = ScheduleKind::kFixed;
                   else throw ConfigError("schedule must be cosine or fixed");
                 },
                 [](const TrainConfig& c) { return std::string(to_string(c.schedule)); }});
    real("lr", "learning rate",
         [](auto& c) -> auto& { return c.learning_rate; });
    k.push_back({"optimizer", "sgd | adam",
                 [](TrainConfig& c, std::string_view v) {
                   if (v == "sgd") c.optimizer = OptimizerKind::kSgd;
                   else if (v == "adam") c.optimizer = OptimizerKind::kAdam;
                   else throw ConfigError("optimizer must be sgd or adam");
                 },
                 [](const TrainConfig& c) { return std::string(to_string(c.optimizer)); }});
    real("adam_beta1", "adam first-moment decay",
         [](auto& c) -> auto& { return c.adam_beta1; });
    real("adam_beta2", "adam second-moment decay",
         [](auto& c) -> auto& { return c.adam_beta2; });
    real("adam_eps", "adam denominator guard",
         [](auto& c) -> auto& { return c.adam_eps; });
    k.push_back({"mode", "dss | naive",
                 [](TrainConfig& c, std::string_view v) {
                   if (v == "dss") c.mode = TrainMode::kDss;
                   else if (v == "naive") c.mode = TrainMode::kNaive;
                   else throw ConfigError("mode must be dss or naive");
                 },
                 [](const TrainConfig& c) { return std::string(to_string(c.mode)); }});
    k.push_back({"seed", "run seed",
                 [](TrainConfig& c, std::string_view v) {
                   c.seed = parse_number<std::uint64_t>("seed", v);
                 },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    count("max_new_tokens", "sequence capacity T",
          [](auto& c) -> auto& { return c.max_new_tokens; });
    count("n_ref_samples", "frozen-policy samples per prompt for l_ref",
          [](auto& c) -> auto& { return c.n_ref_samples; });
    real("ref_temperature", "sampling temperature for l_ref estimation",
         [](auto& c) -> auto& { return c.ref_temperature; });
    real("default_l_ref", "l_ref when no reference sample passes the gate",
         [](auto& c) -> auto& { return c.default_l_ref; });
    integer("checkpoint_every", "checkpoint interval in steps, 0 = final only",
            [](auto& c) -> auto& { return c.checkpoint_every; });
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  const ConfigKey* k = find_config_key(key);
  if (!k) throw ConfigError("unknown config key '" + std::string(key) + "'");
  k->set(cfg, detail::trim(value));
}

/// Applies every `key = value` line in `is` on top of `cfg`.
inline void apply_config(TrainConfig& cfg, std::istream& is) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(cfg, detail::trim(s.substr(0, eq)), s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  apply_config(base, in);
  return base;
}

/// (key, value) pairs in table order.
inline std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

inline void write_config(std::ostream& os, const TrainConfig& cfg) {
  for (const auto& [k, v] : config_echo(cfg)) os << k << " = " << v << '\n';
}

}  // namespace dssgrpo

#endif  // DSSGRPO_CONFIG_HPP_
