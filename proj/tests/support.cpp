#include "support.hpp"

#include <array>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <unordered_map>

#include <boost/dynamic_bitset.hpp>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace confx::testing {

fs::path corpus_dir() { return CONFX_CORPUS_DIR; }
fs::path fixture_dir() { return CONFX_FIXTURE_DIR; }

std::string corpus_file(const std::string& name) { return (corpus_dir() / (name + ".mc")).string(); }

Program corpus_program(const std::string& name) { return parse(read_file(corpus_file(name))); }

std::vector<std::string> all_corpus() {
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(corpus_dir())) {
    const std::string file = entry.path().filename().string();
    if (entry.path().extension() == ".mc" && !file.ends_with(".fixed.mc")) {
      names.push_back(entry.path().stem().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> buggy_corpus() {
  std::vector<std::string> names;
  for (const std::string& n : all_corpus()) {
    auto m = load_manifest(corpus_file(n));
    if (m && m->bug_type != "none") names.push_back(n);
  }
  return names;
}

std::pair<int, std::string> run_cli(const std::string& args) {
  const std::string cmd = std::string(CONFX_BIN) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

ObservedOrders observe_orders(const Program& p, const StaticHappensBeforeGraph& g) {
  ObservedOrders result;
  const std::size_t n = g.nodes().size();
  using Seen = boost::dynamic_bitset<>;
  std::set<std::string> visited;

  auto to_event = [&](const State& s, const TraceEvent& te) -> std::optional<std::size_t> {
    Event e;
    e.thread.chain = s.view(te.thread).chain;
    e.statement = te.stmt;
    e.op = te.kind == "W" ? AccessOp::Write : AccessOp::Read;
    e.location = te.loc;
    auto idx = g.index_of(e);
    if (!idx) result.unmapped.insert(e.str());
    return idx;
  };

  std::function<void(const State&, const Seen&)> dfs = [&](const State& s, const Seen& seen) {
    std::string key = s.serialize();
    for (std::size_t i = 0; i < n; ++i) key.push_back(seen.test(i) ? '1' : '0');
    if (!visited.insert(std::move(key)).second) return;
    ++result.states;
    if (s.terminal()) return;
    for (int tid : s.runnable()) {
      State next = s;
      Seen now = seen;
      for (const TraceEvent& te : next.step(tid)) {
        if (!te.is_access()) continue;
        auto idx = to_event(next, te);
        if (!idx) continue;
        for (std::size_t i = now.find_first(); i != Seen::npos; i = now.find_next(i)) {
          result.seen.insert({i, *idx});
        }
        now.set(*idx);
      }
      dfs(next, now);
    }
  };
  dfs(State(p), Seen(n));
  return result;
}

static bool failed(const State& s) { return s.fault().has_value() || s.deadlocked(); }

double exact_failure_probability(const Program& p) {
  std::unordered_map<std::string, double> memo;
  std::function<double(const State&)> prob = [&](const State& s) -> double {
    if (s.terminal()) return failed(s) ? 1.0 : 0.0;
    std::string key = s.serialize();
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const auto choices = s.runnable();
    double sum = 0;
    for (int tid : choices) {
      State next = s;
      next.step(tid);
      sum += prob(next);
    }
    double v = sum / static_cast<double>(choices.size());
    memo.emplace(std::move(key), v);
    return v;
  };
  return prob(State(p));
}

InterleavingCount count_interleavings(const Program& p) {
  std::unordered_map<std::string, InterleavingCount> memo;
  std::function<InterleavingCount(const State&)> count = [&](const State& s) -> InterleavingCount {
    if (s.terminal()) return {failed(s) ? 1.0 : 0.0, 1.0};
    std::string key = s.serialize();
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    InterleavingCount c;
    for (int tid : s.runnable()) {
      State next = s;
      next.step(tid);
      auto sub = count(next);
      c.failing += sub.failing;
      c.total += sub.total;
    }
    memo.emplace(std::move(key), c);
    return c;
  };
  return count(State(p));
}

std::set<std::int64_t> final_values(const Program& p, const std::string& global) {
  std::set<std::int64_t> values;
  std::set<std::string> visited;
  std::function<void(const State&)> dfs = [&](const State& s) {
    if (!visited.insert(s.serialize()).second) return;
    if (s.terminal()) {
      values.insert(s.global(global));
      return;
    }
    for (int tid : s.runnable()) {
      State next = s;
      next.step(tid);
      dfs(next);
    }
  };
  dfs(State(p));
  return values;
}

std::string stress_program(int threads, int statements) {
  std::ostringstream out;
  for (int t = 0; t < threads; ++t) {
    for (int k = 0; k < 4; ++k) out << "shared int g" << t << "_" << k << " = 0;\n";
  }
  out << "shared int hub = 0;\nlock m;\n\nmain() {\n";
  for (int t = 0; t < threads; ++t) out << "    spawn h" << t << " = worker" << t << "();\n";
  for (int t = 0; t < threads; ++t) out << "    join h" << t << ";\n";
  out << "    assert(hub >= 0);\n}\n";
  for (int t = 0; t < threads; ++t) {
    out << "\nworker" << t << "() {\n";
    for (int s = 0; s < statements; ++s) {
      const int w = s % 4;
      const int r = (s + 1) % 4;
      if (s % 5 == 4) {
        out << "    lock (m) {\n        g" << t << "_" << w << " = g" << t << "_" << r << " + " << s
            << ";\n    }\n";
      } else {
        out << "    g" << t << "_" << w << " = g" << t << "_" << r << " + " << s << ";\n";
      }
    }
    out << "    helper" << t << "(" << t << ");\n";
    out << "    hub = hub + 1;\n}\n";
    out << "\nhelper" << t << "(v) {\n    var a = v * 2;\n    a = a + 1;\n}\n";
  }
  return out.str();
}

}  // namespace confx::testing
