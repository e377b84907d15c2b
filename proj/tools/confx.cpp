// confx: detect, extract, classify, fix, bench and replay MiniConc programs.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "confx/agent.hpp"
#include "confx/analysis.hpp"
#include "confx/cli.hpp"
#include "confx/explorer.hpp"
#include "confx/extractor.hpp"
#include "confx/graphs.hpp"
#include "confx/patterns.hpp"

namespace fs = std::filesystem;
using namespace confx;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

Schedule parse_schedule(const std::string& arg) {
  if (fs::exists(arg)) return trace_from_json(read_file(arg)).failing_schedule;
  Schedule s;
  std::stringstream in(arg);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      s.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error("schedule must be a trace file or comma separated thread ids, got '" + arg + "'");
    }
  }
  return s;
}

std::set<MethodId> read_method_list(const std::string& path) {
  std::set<MethodId> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confx: concurrency bug detection, context extraction and LLM-driven repair for MiniConc"};
  app.require_subcommand(1);
  std::string config_path;
  bool json = false;
  app.add_option("--config", config_path, "TOML or JSON configuration file")->check(CLI::ExistingFile);
  app.add_flag("--json", json, "machine-readable output");

  Config cfg;
  std::optional<std::size_t> depth_bound;
  std::optional<std::uint64_t> seed;

  // detect
  auto* detect = app.add_subcommand("detect", "search for assertion failures and deadlocks");
  std::string detect_file;
  bool exhaustive = false;
  std::optional<std::size_t> random_runs;
  std::string emit_shbg;
  bool emit_marks = false;
  bool detect_classify = false;
  std::string trace_out;
  detect->add_option("file", detect_file, "program (.mc)")->required();
  auto* ex_flag = detect->add_flag("--exhaustive", exhaustive, "exhaustive exploration (default)");
  detect->add_option("--random", random_runs, "random-schedule runs instead of exhaustive search")->excludes(ex_flag);
  detect->add_option("--seed", seed, "random scheduler seed");
  detect->add_option("--depth-bound", depth_bound, "maximum steps per schedule");
  detect->add_option("--emit-shbg", emit_shbg, "write <base>.json and <base>.dot");
  detect->add_flag("--emit-marks", emit_marks, "print the marked methods with provenance");
  detect->add_flag("--classify", detect_classify, "match the failing trace against the access patterns");
  detect->add_option("--trace-out", trace_out, "write the failing trace as JSON");

  // extract
  auto* extract_cmd = app.add_subcommand("extract", "filter a program down to bug-relevant methods");
  std::string extract_file;
  std::string stage_name = "p4";
  std::string ideal_file;
  bool report_flag = false;
  extract_cmd->add_option("file", extract_file, "program (.mc)")->required();
  extract_cmd->add_option("--stage", stage_name, "p1, p2, p3, p4 or ideal");
  extract_cmd->add_option("--ideal", ideal_file, "methods to keep for the ideal stage, one per line")
      ->check(CLI::ExistingFile);
  extract_cmd->add_flag("--report", report_flag, "token counts and filtered ratios per stage");

  // classify
  auto* classify_cmd = app.add_subcommand("classify", "classify a failing trace");
  std::string trace_file;
  classify_cmd->add_option("trace", trace_file, "trace JSON written by detect --trace-out")->required();

  // fix
  auto* fix = app.add_subcommand("fix", "run the repair loop");
  std::string fix_file;
  std::optional<std::string> strategy;
  std::optional<std::string> llm;
  std::optional<int> max_attempts;
  std::string transcript;
  std::string patched_out;
  fix->add_option("file", fix_file, "program (.mc)")->required();
  fix->add_option("--strategy", strategy, "one_step, two_step, direct or no_bug_info");
  fix->add_option("--llm", llm, "live or mock:<fixture.json>");
  fix->add_option("--max-attempts", max_attempts, "repair attempts");
  fix->add_option("--seed", seed, "seed for validation runs");
  fix->add_option("--depth-bound", depth_bound, "maximum steps per schedule");
  fix->add_option("--stage", stage_name, "stage of the code shown to the model");
  fix->add_option("--transcript", transcript, "write the session transcript JSON");
  fix->add_option("--out", patched_out, "write the repaired program");

  // bench
  auto* bench = app.add_subcommand("bench", "run detect, extract and fix over a corpus directory");
  std::string corpus;
  std::string stages_arg;
  std::string bench_out;
  bool timings = false;
  bench->add_option("dir", corpus, "corpus directory")->required();
  bench->add_option("--stages", stages_arg, "comma separated stage sweep, e.g. p1,p2,p3,p4");
  bench->add_option("--llm", llm, "mock, live or none");
  bench->add_option("--seed", seed, "seed for validation runs");
  bench->add_option("--out", bench_out, "also write the JSON report here");
  bench->add_flag("--timings", timings, "record wall time per phase");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "re-run a schedule");
  std::string replay_file;
  std::string schedule_arg;
  replay_cmd->add_option("file", replay_file, "program (.mc)")->required();
  replay_cmd->add_option("schedule", schedule_arg, "trace JSON or comma separated thread ids")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) cfg = load_config(config_path);
    if (depth_bound) cfg.depth_bound = *depth_bound;
    if (seed) cfg.seed = *seed;
    if (strategy) cfg.strategy = parse_strategy(*strategy);
    if (llm) cfg.llm = *llm;
    if (max_attempts) cfg.max_attempts = *max_attempts;
    cfg.validate();
    RepairConfig rc = cfg.repair_config();

    if (detect->parsed()) {
      Program p = parse(read_file(detect_file));
      if (!emit_shbg.empty()) {
        auto g = build_shbg(p, build_call_graph(p));
        write_file(emit_shbg + ".json", g.to_json() + "\n");
        write_file(emit_shbg + ".dot", g.to_dot());
      }
      DetectionResult r = random_runs ? run_random(p, *random_runs, cfg.seed, cfg.depth_bound)
                                      : explore(p, rc.explore);
      BugReport report = make_bug_report(p, r);
      std::optional<Classification> cls;
      if (detect_classify && r.verdict != Verdict::NoBugFound) cls = classify_bug(r);
      std::optional<MarkedMethodSet> marks;
      if (emit_marks) marks = mark_methods(p);
      if (!trace_out.empty()) write_file(trace_out, r.trace_json() + "\n");
      if (json) {
        nlohmann::json out = nlohmann::json::parse(report.to_json());
        out["partial"] = r.partial;
        out["stats"] = {{"schedules", r.stats.schedules}, {"states", r.stats.states}, {"runs", r.stats.runs}};
        if (cls) out["classification"] = nlohmann::json::parse(cls->to_json());
        if (marks) out["marks"] = nlohmann::json::parse(marks->to_json())["marked"];
        std::cout << out.dump(2) << '\n';
      } else {
        std::cout << report.text();
        std::cout << "Explored: " << r.stats.schedules << " schedules, " << r.stats.states << " states";
        if (r.stats.runs) std::cout << ", " << r.stats.runs << " runs";
        if (r.partial) std::cout << " (partial: bound reached)";
        std::cout << '\n';
        if (cls) {
          std::cout << "Class: " << cls->bug_class << "\nPatterns:";
          for (int id : cls->pattern_ids) std::cout << ' ' << id;
          std::cout << '\n';
        }
        if (marks) {
          std::cout << "Marked methods:\n";
          for (const auto& m : marks->methods) std::cout << "  " << m << " (" << to_string(marks->provenance.at(m)) << ")\n";
        }
      }
      return r.verdict == Verdict::NoBugFound ? 0 : 1;
    }

    if (extract_cmd->parsed()) {
      Program p = parse(read_file(extract_file));
      ExtractOptions eo;
      if (!ideal_file.empty()) eo.ideal_keep = read_method_list(ideal_file);
      if (report_flag) {
        StageReport sr = stage_report(p, eo, !ideal_file.empty());
        if (json) {
          std::cout << sr.to_json() << '\n';
        } else {
          for (const StageMetrics& m : sr.stages) {
            std::cout << to_string(m.stage) << '\t' << m.tokens << '\t';
            if (m.ratio) {
              std::cout << *m.ratio;
            } else {
              std::cout << '-';
            }
            std::cout << '\n';
          }
        }
        return 0;
      }
      FilterStage stage = parse_stage(stage_name);
      if (stage == FilterStage::Ideal && ideal_file.empty()) throw Error("the ideal stage needs --ideal <methods.txt>");
      FilteredSource out = extract(p, stage, eo);
      if (json) {
        nlohmann::json omitted = nlohmann::json::array();
        for (const auto& o : out.omitted) omitted.push_back(o.name);
        nlohmann::json doc{{"stage", std::string(to_string(out.stage))},
                           {"text", out.text},
                           {"omitted", omitted},
                           {"tokens", out.token_count}};
        doc["ratio"] = out.tokens_filtered_ratio ? nlohmann::json(*out.tokens_filtered_ratio) : nlohmann::json(nullptr);
        std::cout << doc.dump(2) << '\n';
      } else {
        std::cout << out.text;
      }
      return 0;
    }

    if (classify_cmd->parsed()) {
      Classification c = classify_bug(trace_from_json(read_file(trace_file)));
      if (json) {
        std::cout << c.to_json() << '\n';
      } else {
        std::cout << "Class: " << c.bug_class << '\n';
        for (const auto& w : c.witnesses) {
          std::cout << "  pattern " << w.id << " (" << catalog()[w.id - 1].str() << ") at events";
          for (auto i : w.positions) std::cout << ' ' << i;
          std::cout << '\n';
        }
      }
      return 0;
    }

    if (fix->parsed()) {
      Program p = parse(read_file(fix_file));
      rc.stage = parse_stage(stage_name);
      rc.prompt.file_name = fs::path(fix_file).filename().string();
      std::unique_ptr<LlmClient> client;
      if (cfg.llm == "live") {
        client = std::make_unique<HttpLlmClient>(HttpLlmClient::from_env());
      } else if (cfg.llm.rfind("mock:", 0) == 0) {
        client = std::make_unique<MockLlmClient>(MockLlmClient::from_file(cfg.llm.substr(5)));
      } else {
        throw Error("fix needs --llm live or --llm mock:<fixture.json>");
      }
      RepairSession s = repair(p, *client, rc);
      if (!transcript.empty()) write_file(transcript, s.transcript_json() + "\n");
      if (!patched_out.empty() && s.outcome == RepairOutcome::Fixed) write_file(patched_out, s.patched_source);
      if (json) {
        std::cout << s.transcript_json() << '\n';
      } else {
        std::cout << "Outcome: " << to_string(s.outcome) << "\nAttempts: " << s.attempts << '\n';
        if (s.outcome == RepairOutcome::Fixed) {
          std::cout << "Locks added: " << s.locks_added << "\n\n" << s.patched_source;
        } else if (!s.history.empty()) {
          std::cout << "Last error:\n" << s.history.back().error << '\n';
        }
      }
      return s.outcome == RepairOutcome::Fixed ? 0 : 1;
    }

    if (bench->parsed()) {
      BenchOptions bo;
      bo.timings = timings;
      if (!stages_arg.empty()) {
        bo.stages.clear();
        std::stringstream in(stages_arg);
        std::string item;
        while (std::getline(in, item, ',')) bo.stages.push_back(parse_stage(item));
      }
      BenchmarkReport report = run_bench(corpus, cfg, bo);
      if (!bench_out.empty()) write_file(bench_out, report.to_json() + "\n");
      std::cout << (json ? report.to_json() + "\n" : report.to_text());
      return 0;
    }

    if (replay_cmd->parsed()) {
      Program p = parse(read_file(replay_file));
      DetectionResult r = replay(p, parse_schedule(schedule_arg), cfg.depth_bound);
      std::cout << (json ? r.trace_json() + "\n" : make_bug_report(p, r).text());
      return r.verdict == Verdict::NoBugFound ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "confx: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
