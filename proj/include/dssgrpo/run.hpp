// A training run on disk. Everything a run writes goes under one directory:
//
//   reference.ckpt          frozen step-0 snapshot
//   steps.jsonl             one StepReport per line
//   weights_step0.jsonl     step-0 audit: dss and naive weights per group
//   checkpoint_step<N>.ckpt every `checkpoint_every` steps (N = steps done)
//   final.ckpt              parameters after the last step
//   skipped.jsonl           batches whose gradient was non-finite (if any)
//   reference_lengths.txt   cached l_ref per prompt
//   manifest.json           written last, exactly once

#ifndef DSSGRPO_RUN_HPP_
#define DSSGRPO_RUN_HPP_

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dssgrpo/config.hpp"
#include "dssgrpo/environment.hpp"
#include "dssgrpo/policy.hpp"
#include "dssgrpo/trainer.hpp"

namespace dssgrpo {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "DSSGRPO_OUT_DIR";

/// Explicit flag, then the environment override, then the fallback.
inline std::filesystem::path resolve_out_dir(const std::string& flag,
                                             const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return fallback;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string() +
                             (ec ? ": " + ec.message() : ""));
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

inline nlohmann::json to_json(const GroupReport& g) {
  return {{"instance_id", g.instance_id}, {"difficulty", g.difficulty},
          {"p_succ", g.p_succ},           {"w_diff", g.w_diff},
          {"n_gated", g.n_gated},         {"used_minmax", g.used_minmax},
          {"l_ref", g.l_ref},             {"mean_l_thk", g.mean_l_thk},
          {"mean_l_ans", g.mean_l_ans},   {"mean_r_eff", g.mean_r_eff},
          {"mean_r_len", g.mean_r_len},   {"loss", g.loss},
          {"grad_norm", g.grad_norm}};
}

inline nlohmann::json to_json(const StepReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) groups.push_back(to_json(g));
  return {{"step", r.step},           {"temperature", r.temperature},
          {"loss", r.loss},           {"grad_norm", r.grad_norm},
          {"skipped", r.skipped},     {"groups", std::move(groups)}};
}

inline nlohmann::json weights_json(const RoutedWeights& w) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < w.group_size(); ++k) {
    const auto row = w.row(k);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline nlohmann::json batch_json(const GroupBatch& b) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : b.samples) {
    samples.push_back({{"tokens", s.tokens},
                       {"reason", std::string(to_string(s.verdict.reason))},
                       {"l_thk", s.lengths.thk},
                       {"l_ans", s.lengths.ans}});
  }
  return {{"instance_id", b.task.instance_id},
          {"digits", b.task.digit_string()},
          {"l_ref", b.l_ref},
          {"gates", b.gates.g},
          {"samples", std::move(samples)}};
}

inline void write_reference_lengths(std::ostream& os, const ReferenceCache& cache) {
  os << "# digits l_ref samples gated fallback\n";
  for (const auto& [digits, r] : cache.entries()) {
    os << digits << ' ' << r.l_ref << ' ' << r.samples << ' ' << r.gated << ' '
       << (r.fallback ? 1 : 0) << '\n';
  }
}

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<StepReport> steps;
  PolicyParams final_params;
  std::size_t skipped_steps = 0;
};

inline RunResult run_training(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                              const std::string& code_version = kVersion) {
  cfg.validate();
  ensure_directory(out_dir);
  const std::string started = utc_timestamp();
  Trainer trainer(cfg);
  const std::uint64_t spec_hash = trainer.spec().hash();
  std::vector<std::string> files;
  auto path = [&](const std::string& name) {
    files.push_back(name);
    return out_dir / name;
  };

  save_checkpoint(path("reference.ckpt").string(), {trainer.reference_params(), spec_hash, 0});
  auto steps_log = open_output(path("steps.jsonl"));
  auto audit = open_output(path("weights_step0.jsonl"));
  std::ofstream skipped_log;

  RunResult result;
  result.out_dir = out_dir;
  std::vector<GroupBatch> last_batches;
  while (!trainer.done()) {
    const long step = trainer.step();
    const auto observer = [&](long s, const std::vector<GroupBatch>& batches,
                              const std::vector<GroupWeights>&) {
      if (s == 0) {
        // Both weight constructions on the same batches, so the two modes
        // can be compared path for path.
        for (const auto& b : batches) {
          const auto dss = compute_group_weights(b, trainer.weight_config(), TrainMode::kDss);
          const auto naive =
              compute_group_weights(b, trainer.weight_config(), TrainMode::kNaive);
          audit << nlohmann::json{{"instance_id", b.task.instance_id},
                                  {"mode_used", std::string(to_string(cfg.mode))},
                                  {"dss", weights_json(dss.weights)},
                                  {"naive", weights_json(naive.weights)}}
                       .dump()
                << '\n';
        }
      }
      last_batches = batches;
    };
    StepReport rep = trainer.run_step(observer);
    steps_log << to_json(rep).dump() << '\n';
    if (rep.skipped) {
      ++result.skipped_steps;
      if (!skipped_log.is_open()) skipped_log = open_output(path("skipped.jsonl"));
      nlohmann::json batches = nlohmann::json::array();
      for (const auto& b : last_batches) batches.push_back(batch_json(b));
      skipped_log << nlohmann::json{{"step", step}, {"batches", std::move(batches)}}.dump()
                  << '\n';
    }
    result.steps.push_back(std::move(rep));
    const long done_steps = trainer.step();
    if (cfg.checkpoint_every > 0 && done_steps % cfg.checkpoint_every == 0 &&
        done_steps < cfg.total_steps) {
      save_checkpoint(path("checkpoint_step" + std::to_string(done_steps) + ".ckpt").string(),
                      {trainer.params(), spec_hash, done_steps});
    }
  }
  steps_log.close();
  audit.close();
  if (skipped_log.is_open()) skipped_log.close();
  save_checkpoint(path("final.ckpt").string(), {trainer.params(), spec_hash, trainer.step()});
  {
    auto os = open_output(path("reference_lengths.txt"));
    write_reference_lengths(os, trainer.reference());
  }

  nlohmann::json config = nlohmann::json::object();
  for (const auto& [k, v] : config_echo(cfg)) config[k] = v;
  files.push_back("manifest.json");
  const nlohmann::json manifest = {
      {"kind", "train"},
      {"version", code_version},
      {"spec_hash", hex64(spec_hash)},
      {"spec", trainer.spec().describe()},
      {"seed", cfg.seed},
      {"config", config},
      {"started_at", started},
      {"finished_at", utc_timestamp()},
      {"skipped_steps", result.skipped_steps},
      {"files", files}};
  auto os = open_output(out_dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  result.final_params = trainer.params();
  return result;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_RUN_HPP_
