// Evaluation summaries on disk and the cross-run comparison report.
//
// A method's evaluation lives in <root>/<method>/eval_summary.json. The
// report reads one summary per requested method and writes
//
//   comparison.csv        method,metric,D=<d>...,overall
//                         metric in {accuracy, think, answer}
//   histograms.csv        method,segment,bin_lo,bin_hi,count
//   report_manifest.json  inputs and outputs, no timestamps
//
// A missing summary becomes "absent" cells rather than an error.

#ifndef DSSGRPO_REPORT_HPP_
#define DSSGRPO_REPORT_HPP_

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dssgrpo/metrics.hpp"
#include "dssgrpo/run.hpp"

namespace dssgrpo {

inline nlohmann::json to_json(const BucketStats& b) {
  return {{"n_prompts", b.n_prompts},
          {"n_samples", b.n_samples},
          {"n_length_prompts", b.n_length_prompts},
          {"pass_rate", b.pass_rate},
          {"mean_l_thk", b.mean_l_thk},
          {"mean_l_ans", b.mean_l_ans},
          {"mean_l_ref", b.mean_l_ref},
          {"answer_ratio", b.answer_ratio}};
}

inline BucketStats bucket_from_json(const nlohmann::json& j) {
  BucketStats b;
  b.n_prompts = j.at("n_prompts").get<std::size_t>();
  b.n_samples = j.at("n_samples").get<std::size_t>();
  b.n_length_prompts = j.at("n_length_prompts").get<std::size_t>();
  b.pass_rate = j.at("pass_rate").get<double>();
  b.mean_l_thk = j.at("mean_l_thk").get<double>();
  b.mean_l_ans = j.at("mean_l_ans").get<double>();
  b.mean_l_ref = j.at("mean_l_ref").get<double>();
  b.answer_ratio = j.at("answer_ratio").get<double>();
  return b;
}

inline nlohmann::json to_json(const EvalSummary& s) {
  nlohmann::json by = nlohmann::json::object();
  for (const auto& [d, b] : s.by_difficulty) by[std::to_string(d)] = to_json(b);
  return {{"n_per_prompt", s.n_per_prompt},
          {"temperature", s.temperature},
          {"seed", s.seed},
          {"by_difficulty", by},
          {"overall", to_json(s.overall)},
          {"think_lengths", s.think_lengths},
          {"answer_lengths", s.answer_lengths}};
}

inline EvalSummary eval_summary_from_json(const nlohmann::json& j) {
  EvalSummary s;
  s.n_per_prompt = j.at("n_per_prompt").get<std::size_t>();
  s.temperature = j.at("temperature").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& [d, b] : j.at("by_difficulty").items()) {
    s.by_difficulty[std::stoi(d)] = bucket_from_json(b);
  }
  s.overall = bucket_from_json(j.at("overall"));
  s.think_lengths = j.at("think_lengths").get<std::vector<double>>();
  s.answer_lengths = j.at("answer_lengths").get<std::vector<double>>();
  return s;
}

inline void save_eval_summary(const std::filesystem::path& path, const EvalSummary& s) {
  auto os = open_output(path);
  os << to_json(s).dump(2) << '\n';
}

inline EvalSummary load_eval_summary(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  try {
    return eval_summary_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

inline constexpr const char* kEvalSummaryFile = "eval_summary.json";

struct ReportInput {
  std::string method;
  std::optional<EvalSummary> summary;  // empty when the run is missing
  std::string source;
};

/// Loads <root>/<method>/eval_summary.json for each method, if present.
inline std::vector<ReportInput> collect_report_inputs(const std::vector<std::string>& methods,
                                                      const std::filesystem::path& root) {
  std::vector<ReportInput> out;
  for (const auto& m : methods) {
    ReportInput in;
    in.method = m;
    const auto p = root / m / kEvalSummaryFile;
    in.source = p.string();
    if (std::filesystem::exists(p)) in.summary = load_eval_summary(p);
    out.push_back(std::move(in));
  }
  return out;
}

namespace detail {

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace detail

struct ReportOptions {
  double bin_width = 4.0;
};

inline std::vector<std::string> emit_report(const std::vector<ReportInput>& runs,
                                            const std::filesystem::path& out_dir,
                                            const ReportOptions& opt = {}) {
  ensure_directory(out_dir);
  std::set<int> difficulties;
  for (const auto& r : runs) {
    if (!r.summary) continue;
    for (const auto& [d, b] : r.summary->by_difficulty) difficulties.insert(d);
  }

  {
    auto os = open_output(out_dir / "comparison.csv");
    os << "method,metric";
    for (int d : difficulties) os << ",D=" << d;
    os << ",overall\n";
    const char* metrics[] = {"accuracy", "think", "answer"};
    for (const auto& r : runs) {
      for (const char* metric : metrics) {
        os << r.method << ',' << metric;
        auto cell = [&](const BucketStats& b) {
          const std::string m = metric;
          if (m == "accuracy") return detail::csv_number(b.pass_rate);
          if (m == "think") return detail::csv_number(b.mean_l_thk);
          return detail::csv_number(b.mean_l_ans);
        };
        for (int d : difficulties) {
          os << ',';
          if (!r.summary) {
            os << "absent";
          } else if (auto it = r.summary->by_difficulty.find(d);
                     it != r.summary->by_difficulty.end()) {
            os << cell(it->second);
          } else {
            os << "absent";
          }
        }
        os << ',' << (r.summary ? cell(r.summary->overall) : std::string("absent")) << '\n';
      }
    }
  }

  {
    auto os = open_output(out_dir / "histograms.csv");
    os << "method,segment,bin_lo,bin_hi,count\n";
    for (const auto& r : runs) {
      for (SegmentTag tag : {SegmentTag::kThink, SegmentTag::kAnswer}) {
        if (!r.summary) {
          os << r.method << ',' << to_string(tag) << ",absent,absent,absent\n";
          continue;
        }
        const auto& lengths =
            tag == SegmentTag::kThink ? r.summary->think_lengths : r.summary->answer_lengths;
        const auto h = length_histogram(lengths, opt.bin_width, tag);
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
          os << r.method << ',' << to_string(tag) << ',' << h.edges[i] << ','
             << h.edges[i + 1] << ',' << h.counts[i] << '\n';
        }
      }
    }
  }

  const std::vector<std::string> files = {"comparison.csv", "histograms.csv",
                                          "report_manifest.json"};
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& r : runs) {
    inputs.push_back({{"method", r.method},
                      {"status", r.summary ? "present" : "absent"},
                      {"source", r.source}});
  }
  const nlohmann::json manifest = {{"kind", "report"},
                                   {"version", kVersion},
                                   {"bin_width", opt.bin_width},
                                   {"inputs", inputs},
                                   {"files", files}};
  auto os = open_output(out_dir / "report_manifest.json");
  os << manifest.dump(2) << '\n';
  return files;
}

}  // namespace dssgrpo

#endif  // DSSGRPO_REPORT_HPP_
