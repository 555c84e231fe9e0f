// dssgrpo: train, evaluate and report on the digit-sum think/answer task.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dssgrpo.hpp"

namespace fs = std::filesystem;
using namespace dssgrpo;

#ifndef DSSGRPO_CODE_VERSION
#define DSSGRPO_CODE_VERSION "unknown"
#endif

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string code_version() { return std::string(kVersion) + "+" + DSSGRPO_CODE_VERSION; }

struct TrainArgs {
  std::string config;
  std::string out;
  std::map<std::string, std::string> overrides;
};

int do_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = load_config(a.config);
  for (const auto& [k, v] : a.overrides) set_config_value(cfg, k, v);
  cfg.validate();
  const fs::path out = resolve_out_dir(
      a.out, "runs/" + std::string(to_string(cfg.mode)) + "_seed" + std::to_string(cfg.seed));
  std::cerr << "training " << to_string(cfg.mode) << " seed " << cfg.seed << " for "
            << cfg.total_steps << " steps -> " << out.string() << "\n";
  const RunResult r = run_training(cfg, out, code_version());
  const auto& last = r.steps.back();
  std::cerr << "done: final loss " << last.loss << ", skipped steps " << r.skipped_steps
            << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string tasks;
  std::string out;
  std::string reference;
  std::size_t n = 8;
  double temperature = 0.7;
  std::uint64_t seed = 0;
  std::size_t max_new_tokens = 64;
  std::size_t ref_samples = 32;
  double ref_temperature = 1.0;
  std::uint64_t ref_seed = 0;
};

PolicyParams load_matching(const std::string& path, const FeatureSpec& spec) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.spec_hash != spec.hash() || ck.params.feature_dim != spec.feature_dim() ||
      ck.params.vocab_size != spec.vocab_size) {
    throw std::runtime_error(path + ": checkpoint was written for a different feature spec");
  }
  return ck.params;
}

int do_eval(const EvalArgs& a) {
  const FeatureSpec spec = task_feature_spec();
  const PolicyParams params = load_matching(a.checkpoint, spec);
  std::ifstream tf(a.tasks);
  if (!tf) throw std::runtime_error("cannot read task set " + a.tasks);
  const auto tasks = read_task_set(tf);
  std::optional<ReferenceCache> ref;
  if (!a.reference.empty()) {
    ReferenceConfig rc{a.ref_samples, a.ref_temperature, 4.0, a.max_new_tokens};
    ref.emplace(load_matching(a.reference, spec), spec, rc, a.ref_seed);
  }
  EvalConfig ec{a.n, a.temperature, a.seed, a.max_new_tokens};
  const EvalSummary s = evaluate(params, spec, tasks, ec, ref ? &*ref : nullptr);
  const fs::path out = resolve_out_dir(a.out, "runs/eval");
  ensure_directory(out);
  save_eval_summary(out / kEvalSummaryFile, s);
  std::cout << "pass@1 " << s.overall.pass_rate << "  think " << s.overall.mean_l_thk
            << "  answer " << s.overall.mean_l_ans;
  if (ref) std::cout << "  answer/ref " << s.overall.answer_ratio;
  std::cout << "\n";
  return 0;
}

int do_report(const std::string& runs, const std::string& root_flag, const std::string& out_flag,
              double bin_width) {
  const fs::path root = resolve_out_dir(root_flag, "runs");
  const fs::path out = out_flag.empty() ? root / "report" : fs::path(out_flag);
  const auto inputs = collect_report_inputs(split_list(runs), root);
  for (const auto& in : inputs) {
    if (!in.summary) std::cerr << "note: " << in.source << " missing, marked absent\n";
  }
  emit_report(inputs, out, {bin_width});
  std::cerr << "report written to " << out.string() << "\n";
  return 0;
}

int do_goldens(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot read " + in_path);
  const auto lines = read_golden_lines(in);
  std::ofstream out_file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path);
    if (!out_file) throw std::runtime_error("cannot write " + out_path);
    os = &out_file;
  }
  *os << "# name | mode | s | eps_norm | gates | r_think | r_answer | bounds | T | expected\n";
  for (const auto& g : lines) {
    write_golden_line(*os, to_golden_line(with_computed_expected(routed_case_from(g))));
  }
  return 0;
}

int do_tasks(const std::string& diffs, std::size_t per, std::uint64_t seed,
             const std::string& out_path) {
  std::vector<int> ds;
  for (const auto& d : split_list(diffs)) ds.push_back(std::stoi(d));
  const auto tasks = make_task_set(ds, per, seed);
  std::ofstream out_file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path);
    if (!out_file) throw std::runtime_error("cannot write " + out_path);
    os = &out_file;
  }
  *os << "# id difficulty digits target\n";
  write_task_set(*os, tasks);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DSS-GRPO desk-scale trainer"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "run the trainer");
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--out", train.out, "output directory (else $DSSGRPO_OUT_DIR)");
  // One override flag per config key; applied after the file.
  std::map<std::string, std::string> raw;
  for (const auto& k : config_keys()) {
    train_cmd->add_option_function<std::string>(
        "--" + k.name, [&raw, name = k.name](const std::string& v) { raw[name] = v; },
        k.help);
  }

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a task set");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "policy checkpoint")->required();
  eval_cmd->add_option("--tasks", eval.tasks, "task set file")->required();
  eval_cmd->add_option("--out", eval.out, "output directory (else $DSSGRPO_OUT_DIR)");
  eval_cmd->add_option("--n", eval.n, "samples per prompt")->capture_default_str();
  eval_cmd->add_option("--temperature", eval.temperature, "sampling temperature")
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed")->capture_default_str();
  eval_cmd->add_option("--max-new-tokens", eval.max_new_tokens, "sequence capacity")
      ->capture_default_str();
  eval_cmd->add_option("--reference", eval.reference,
                       "frozen checkpoint for l_ref (enables answer ratios)");
  eval_cmd->add_option("--ref-samples", eval.ref_samples)->capture_default_str();
  eval_cmd->add_option("--ref-temperature", eval.ref_temperature)->capture_default_str();
  eval_cmd->add_option("--ref-seed", eval.ref_seed, "seed of the training run")
      ->capture_default_str();

  std::string runs = "base,naive,dss", root, report_out;
  double bin_width = 4.0;
  auto* report_cmd = app.add_subcommand("report", "comparison tables and histograms");
  report_cmd->add_option("--runs", runs, "comma-separated method directories")
      ->capture_default_str();
  report_cmd->add_option("--root", root, "directory holding <method>/eval_summary.json");
  report_cmd->add_option("--out", report_out, "output directory (default <root>/report)");
  report_cmd->add_option("--bin-width", bin_width, "histogram bin width")
      ->capture_default_str();

  std::string golden_in = "tests/data/routed_weights.golden", golden_out;
  auto* goldens_cmd = app.add_subcommand("goldens", "recompute routed-weight golden vectors");
  goldens_cmd->add_option("--in", golden_in, "case file")->capture_default_str();
  goldens_cmd->add_option("--out", golden_out, "output file (default stdout)");

  std::string diffs = "2,3,4,5", tasks_out;
  std::size_t per = 50;
  std::uint64_t task_seed = 12345;
  auto* tasks_cmd = app.add_subcommand("tasks", "write a task set");
  tasks_cmd->add_option("--difficulties", diffs)->capture_default_str();
  tasks_cmd->add_option("--per-difficulty", per)->capture_default_str();
  tasks_cmd->add_option("--seed", task_seed)->capture_default_str();
  tasks_cmd->add_option("--out", tasks_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train_cmd) {
      train.overrides = raw;
      return do_train(train);
    }
    if (*eval_cmd) return do_eval(eval);
    if (*report_cmd) return do_report(runs, root, report_out, bin_width);
    if (*goldens_cmd) return do_goldens(golden_in, golden_out);
    if (*tasks_cmd) return do_tasks(diffs, per, task_seed, tasks_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
