// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any
// failure.
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <sstream>

#include "confx/agent.hpp"
#include "confx/analysis.hpp"
#include "confx/explorer.hpp"
#include "confx/extractor.hpp"
#include "confx/patterns.hpp"
#include "support.hpp"

using namespace confx;
using namespace confx::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failure_.empty()) failure_ = what;
  }
  bool ok() const { return failure_.empty(); }
  const std::string& failure() const { return failure_; }

 private:
  std::string failure_;
};

StaticHappensBeforeGraph shbg(const Program& p) { return build_shbg(p, build_call_graph(p)); }

// Criterion 1 ----------------------------------------------------------------

void pattern_catalog(Check& c, std::string& detail) {
  std::ifstream in(fixture_dir() / "access_patterns.txt");
  const std::regex entry(R"(\(t_([ab]),([RW]),([xy])\))");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int id = 0;
    ls >> id;
    std::vector<PatternEntry> expected;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), entry); it != std::sregex_iterator(); ++it) {
      expected.push_back({(*it)[1].str()[0], (*it)[2] == "W" ? AccessOp::Write : AccessOp::Read, (*it)[3].str()[0]});
    }
    c.expect(id == static_cast<int>(rows) + 1, "fixture ids out of order");
    c.expect(rows < catalog().size() && catalog()[rows].id == id && catalog()[rows].entries == expected,
             "row " + std::to_string(id) + " differs");
    ++rows;
  }
  c.expect(rows == 17 && catalog().size() == 17, "expected 17 rows");
  for (const Pattern& p : catalog()) {
    for (const PatternEntry& a : p.entries) {
      bool partner = false;
      for (const PatternEntry& b : p.entries) {
        partner |= a.thread != b.thread && a.loc == b.loc && (a.op == AccessOp::Write || b.op == AccessOp::Write);
      }
      c.expect(partner, "pattern " + std::to_string(p.id) + " has an entry without a conflicting partner");
    }
  }
  detail = std::to_string(rows) + " rows checked";
}

// Criterion 2 ----------------------------------------------------------------

void hb_oracle(Check& c, std::string& detail) {
  std::vector<std::string> programs;
  for (const std::string& n : all_corpus()) {
    programs.push_back(n);
    if (std::filesystem::exists(corpus_dir() / (n + ".fixed.mc"))) programs.push_back(n + ".fixed");
  }
  std::size_t checked = 0, pairs = 0;
  for (const std::string& name : programs) {
    Program p = corpus_program(name);
    auto g = shbg(p);
    const std::size_t n = g.nodes().size();
    if (n > 14) continue;
    ++checked;
    ObservedOrders seen = observe_orders(p, g);
    c.expect(seen.unmapped.empty(), name + ": executed access without SHBG node");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const HbRelation r = g.classify(i, j);
        const int variants = (r == HbRelation::Before) + (r == HbRelation::After) + (r == HbRelation::Parallel);
        c.expect(variants == 1 && (r == HbRelation::Before) == (g.classify(j, i) == HbRelation::After),
                 name + ": trichotomy");
        if (r != HbRelation::Before) continue;
        ++pairs;
        c.expect(!seen.seen.count({j, i}), name + ": " + g.nodes()[j].str() + " observed before " + g.nodes()[i].str());
        for (std::size_t k = 0; k < n; ++k) {
          if (k != i && k != j && g.classify(j, k) == HbRelation::Before) {
            c.expect(g.classify(i, k) == HbRelation::Before, name + ": transitivity");
          }
        }
      }
    }
  }
  c.expect(checked >= 10, "fewer than 10 programs with at most 14 events");
  detail = std::to_string(checked) + " programs, " + std::to_string(pairs) + " ordered pairs";
}

// Criterion 3 ----------------------------------------------------------------

void nested_monitor_marks(Check& c, std::string& detail) {
  Program p = corpus_program("nested_monitor");
  MarkedMethodSet m = mark_methods(p);
  auto reason = [&](const char* name) { return m.provenance.count(name) ? m.provenance.at(name) : MarkReason::ClosureAncestor; };
  for (const char* name : {"up", "down"}) {
    c.expect(m.contains(name) && reason(name) != MarkReason::ClosureAncestor, std::string(name) + " not marked by relevance");
  }
  for (const char* name : {"get", "put", "producer", "consumer"}) {
    c.expect(m.contains(name) && reason(name) == MarkReason::ClosureAncestor, std::string(name) + " not added by closure");
  }
  c.expect(m.contains("main"), "main missing");
  c.expect(!m.contains("formatStats"), "formatStats marked");
  MarkedMethodSet again = m;
  CallGraph cg = build_call_graph(p);
  close_over_callers(again, cg);
  c.expect(again.methods == m.methods && again.provenance == m.provenance, "closure is not a fixed point");
  for (const MethodId& x : m.methods)
    for (const MethodId& caller : cg.callers(x)) c.expect(m.contains(caller), "caller " + caller + " of " + x + " missing");
  detail = std::to_string(m.methods.size()) + " methods marked";
}

// Criterion 4 ----------------------------------------------------------------

std::set<MethodId> edited_methods(const Program& a, const Program& b) {
  std::set<MethodId> out;
  for (const auto& [name, body] : a.methods) {
    if (!b.methods.count(name)) {
      out.insert(name);
      continue;
    }
    Program pa, pb;
    pa.methods[name] = body;
    pb.methods[name] = b.methods.at(name);
    pa.method_order = pb.method_order = {name};
    if (print(pa) != print(pb)) out.insert(name);
  }
  return out;
}

void retention(Check& c, std::string& detail) {
  std::set<std::string> types;
  std::size_t methods = 0;
  const auto bugs = buggy_corpus();
  for (const std::string& name : bugs) {
    auto manifest = load_manifest(corpus_file(name));
    types.insert(manifest->bug_type);
    Program p = corpus_program(name);
    const std::set<MethodId> edited = edited_methods(p, corpus_program(name + ".fixed"));
    const std::set<MethodId> declared(manifest->reference_patch_methods.begin(), manifest->reference_patch_methods.end());
    std::string listed;
    for (const MethodId& m : edited) listed += " " + m;
    c.expect(edited == declared, name + ": reference patch edits" + listed);
    FilteredSource f = extract(p, FilterStage::ShbFiltered);
    for (const MethodId& m : edited) {
      ++methods;
      c.expect(!f.is_omitted(m), name + ": " + m + " omitted at p4");
    }
  }
  c.expect(bugs.size() >= 10, "fewer than 10 buggy programs");
  c.expect(types.size() == 5, "bug categories missing");
  detail = std::to_string(bugs.size()) + " programs, " + std::to_string(types.size()) + " categories, " +
           std::to_string(methods) + " patched methods retained";
}

// Criterion 5 ----------------------------------------------------------------

void token_monotonicity(Check& c, std::string& detail) {
  const std::vector<FilterStage> stages{FilterStage::Original, FilterStage::CommentStripped,
                                        FilterStage::CallGraphFiltered, FilterStage::ShbFiltered};
  std::size_t files = 0;
  for (const std::string& name : all_corpus()) {
    StageReport r = stage_report(corpus_program(name));
    for (std::size_t i = 1; i < r.stages.size(); ++i) {
      c.expect(r.stages[i].tokens <= r.stages[i - 1].tokens, name + ": tokens grew at " + std::string(to_string(stages[i])));
    }
    ++files;
  }
  const std::map<std::string, std::vector<std::size_t>> hand{
      {"two_writer_race", {50, 49, 49, 49}},
      {"order_violation", {63, 62, 62, 62}},
      {"account", {107, 104, 93, 93}},
  };
  for (const auto& [name, counts] : hand) {
    StageReport r = stage_report(corpus_program(name));
    for (std::size_t i = 0; i < 4; ++i) {
      c.expect(r.stages[i].tokens == counts[i], name + ": stage " + std::to_string(i + 1) + " count");
      if (i > 0) {
        const double expected = 1.0 - static_cast<double>(counts[i]) / static_cast<double>(counts[i - 1]);
        c.expect(r.stages[i].ratio && std::abs(*r.stages[i].ratio - expected) < 1e-12, name + ": ratio");
      }
    }
  }
  detail = std::to_string(files) + " files monotone, 3 hand-counted";
}

// Criteria 6 and 7 -----------------------------------------------------------

std::map<std::string, DetectionResult> g_failures;

void detector(Check& c, std::string& detail) {
  std::size_t bugs = 0, fixed = 0;
  for (const std::string& name : buggy_corpus()) {
    auto manifest = load_manifest(corpus_file(name));
    const bool deadlock = manifest->bug_type.find("deadlock") != std::string::npos;
    DetectionResult r = explore(corpus_program(name));
    c.expect(r.verdict == (deadlock ? Verdict::Deadlock : Verdict::AssertionFailure), name + ": wrong verdict");
    c.expect(replay(corpus_program(name), r.failing_schedule).verdict == r.verdict, name + ": failing schedule does not replay");
    g_failures[name] = r;
    ++bugs;
    DetectionResult f = explore(corpus_program(name + ".fixed"));
    c.expect(f.verdict == Verdict::NoBugFound && !f.partial, name + ".fixed: not clean with full coverage");
    ++fixed;
  }
  const DetectionResult& nm = g_failures["nested_monitor"];
  int waiting = 0, blocked = 0;
  for (const ThreadView& t : nm.threads) {
    waiting += t.root == "consumer" && t.status == ThreadStatus::Waiting &&
               std::count(t.held.begin(), t.held.end(), "bufLock") == 1;
    blocked += t.root == "producer" && t.next_kind == "acquire" && t.next_object == "bufLock";
  }
  c.expect(nm.verdict == Verdict::Deadlock && waiting == 1 && blocked == 1, "nested_monitor: wrong deadlock shape");
  detail = std::to_string(bugs) + " bugs found, " + std::to_string(fixed) + " patched versions clean";
}

void pattern_completeness(Check& c, std::string& detail) {
  std::size_t scanned = 0, deadlocks = 0;
  for (const auto& [name, r] : g_failures) {
    try {
      Classification cls = classify_bug(r);
      if (r.verdict == Verdict::Deadlock) {
        ++deadlocks;
        c.expect(cls.bug_class == "deadlock" && cls.pattern_ids.empty(), name + ": deadlock not classified orthogonally");
      } else {
        ++scanned;
        c.expect(!cls.pattern_ids.empty(), name + ": no pattern");
      }
    } catch (const NoPatternFound&) {
      c.expect(false, name + ": NoPatternFound");
    }
  }
  c.expect(!g_failures.empty(), "criterion 6 produced no traces");
  detail = std::to_string(scanned) + " traces matched, " + std::to_string(deadlocks) + " deadlocks";
}

// Criterion 8 ----------------------------------------------------------------

void agent_loop(Check& c, std::string& detail) {
  Program p = corpus_program("two_writer_race");
  auto session = [&](const char* file) {
    MockLlmClient mock = MockLlmClient::from_file((fixture_dir() / file).string());
    return repair(p, mock, RepairConfig{});
  };
  for (const char* f : {"broken_then_fixed.json", "all_broken.json", "fixed_first.json"}) {
    c.expect(session(f).transcript_json() == session(f).transcript_json(), std::string(f) + ": transcripts differ");
  }
  RepairSession two = session("broken_then_fixed.json");
  c.expect(two.outcome == RepairOutcome::Fixed && two.attempts == 2, "broken-then-correct not Fixed at Iter=2");
  c.expect(two.history.size() == 2 && two.history[1].prompt.find("Your patch introduced an error.") == 0,
           "second prompt lacks the feedback message");
  RepairSession five = session("all_broken.json");
  c.expect(five.outcome == RepairOutcome::ExhaustedAttempts && five.attempts == 5, "all-broken not exhausted at 5");
  const RepairConfig cfg;
  Program fixed = parse(two.patched_source);
  DetectionResult rnd = run_random(fixed, cfg.runs, cfg.seed);
  c.expect(rnd.verdict == Verdict::NoBugFound && rnd.stats.runs == 100, "fixed program fails random runs");
  detail = "Iter=2 fixed, 5 attempts exhausted, " + std::to_string(rnd.stats.runs) + " random runs clean";
}

// Criterion 9 ----------------------------------------------------------------

void lock_count(Check& c, std::string& detail) {
  const std::vector<std::pair<std::string, std::size_t>> hand{
      {"resource_deadlock", 0}, {"two_writer_race", 1}, {"two_stage", 2}};
  for (const auto& [name, n] : hand) {
    c.expect(count_locks_added(corpus_program(name), corpus_program(name + ".fixed")) == n, name + ": lock count");
  }
  Program orig = parse("shared int x = 0; lock m; main(){ lock (m) { x = 1; } x = 2; x = 3; }");
  Program two_minus_one = parse("shared int x = 0; lock m; main(){ x = 1; lock (m) { x = 2; } lock (m) { x = 3; } }");
  c.expect(count_locks_added(orig, two_minus_one) == 1, "add two, remove one");
  detail = "0, 1, 2 and add-two-remove-one cases";
}

// Criterion 10 ---------------------------------------------------------------

void scalability(Check& c, std::string& detail) {
  const int threads = 8;
  std::map<int, double> best;
  std::map<int, std::size_t> events;
  for (int target : {500, 1000, 2000}) {
    const int statements = target / threads / 2;
    Program p = parse(stress_program(threads, statements));
    events[target] = shbg(p).nodes().size();
    double t_best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      auto t0 = Clock::now();
      int calls = 0;
      do {
        MarkedMethodSet m = mark_methods(p);
        c.expect(m.contains("main"), "stress marks");
        ++calls;
      } while (seconds_since(t0) < 0.05);
      t_best = std::min(t_best, seconds_since(t0) / calls);
    }
    best[target] = t_best;
    c.expect(events[target] >= static_cast<std::size_t>(target), "stress program too small");
  }
  c.expect(best[2000] < 10.0, "2000-event run over 10 s");
  const double exponent = std::log(best[2000] / best[500]) / std::log(static_cast<double>(events[2000]) / events[500]);
  c.expect(exponent <= 2.2, "growth exponent above quadratic");
  std::ostringstream d;
  d.precision(3);
  d << events[500] << "/" << events[1000] << "/" << events[2000] << " events in " << best[500] << "/" << best[1000]
    << "/" << best[2000] << " s, exponent " << exponent;
  detail = d.str();
}

}  // namespace

int main() {
  const std::vector<std::tuple<int, const char*, double, std::function<void(Check&, std::string&)>>> criteria{
      {1, "pattern catalog fidelity", 1.0, pattern_catalog},
      {2, "HB soundness against exhaustive interleavings", 60.0, hb_oracle},
      {3, "marked methods of the nested-monitor program", 1.0, nested_monitor_marks},
      {4, "reference-patch methods retained at p4", 0.0, retention},
      {5, "token monotonicity and hand-counted ratios", 0.0, token_monotonicity},
      {6, "detector finds every bug and clears every patch", 120.0, detector},
      {7, "failing traces match access patterns", 0.0, pattern_completeness},
      {8, "agent loop determinism and attempt cap", 0.0, agent_loop},
      {9, "lock-count metric", 0.0, lock_count},
      {10, "mark_methods scalability", 0.0, scalability},
  };
  int failed = 0;
  for (const auto& [id, name, limit, fn] : criteria) {
    Check c;
    std::string detail;
    auto t0 = Clock::now();
    try {
      fn(c, detail);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (limit > 0 && secs >= limit) c.expect(false, "took " + std::to_string(secs) + " s");
    std::ostringstream t;
    t.precision(3);
    t << secs;
    std::cout << (c.ok() ? "PASS" : "FAIL") << "  " << id << ". " << name << " (" << t.str() << " s): "
              << (c.ok() ? detail : c.failure()) << "\n";
    failed += !c.ok();
  }
  return failed == 0 ? 0 : 1;
}
