#include "confx/patterns.hpp"

#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace confx {

namespace {

Pattern make(int id, std::string_view spec) {
  // spec: whitespace separated entries such as "Wa(x)"
  Pattern p;
  p.id = id;
  std::istringstream in{std::string(spec)};
  std::string item;
  while (in >> item) {
    p.entries.push_back(PatternEntry{item[1], item[0] == 'R' ? AccessOp::Read : AccessOp::Write,
                                     item[3]});
  }
  return p;
}

struct Binding {
  std::optional<int> thread[2];
  std::optional<std::string> loc[2];

  bool bind_thread(char sym, int value) {
    auto& mine = thread[sym - 'a'];
    const auto& other = thread[1 - (sym - 'a')];
    if (mine) return *mine == value;
    if (other && *other == value) return false;
    mine = value;
    return true;
  }

  bool bind_loc(char sym, const std::string& value) {
    auto& mine = loc[sym - 'x'];
    const auto& other = loc[1 - (sym - 'x')];
    if (mine) return *mine == value;
    if (other && *other == value) return false;
    mine = value;
    return true;
  }

  bool accepts(const PatternEntry& e, const WindowEvent& w) {
    if (e.op != w.op) return false;
    Binding saved = *this;
    if (bind_thread(e.thread, w.thread) && bind_loc(e.loc, w.loc)) return true;
    *this = saved;
    return false;
  }
};

bool search(const Pattern& p, const std::vector<WindowEvent>& events, std::size_t entry,
            std::size_t from, Binding binding, std::vector<std::size_t>& positions) {
  if (entry == p.entries.size()) return true;
  std::size_t remaining = p.entries.size() - entry;
  for (std::size_t i = from; i + remaining <= events.size(); ++i) {
    Binding next = binding;
    if (!next.accepts(p.entries[entry], events[i])) continue;
    positions.push_back(i);
    if (search(p, events, entry + 1, i + 1, next, positions)) return true;
    positions.pop_back();
  }
  return false;
}

}  // namespace

bool Pattern::uses_two_locations() const {
  for (const PatternEntry& e : entries) {
    if (e.loc == 'y') return true;
  }
  return false;
}

std::string Pattern::str() const {
  std::string out;
  for (const PatternEntry& e : entries) {
    if (!out.empty()) out += ' ';
    out += e.op == AccessOp::Read ? 'R' : 'W';
    out += e.thread;
    out += '(';
    out += e.loc;
    out += ')';
  }
  return out;
}

const std::vector<Pattern>& catalog() {
  static const std::vector<Pattern> patterns = {
      make(1, "Ra(x) Wb(x)"),
      make(2, "Wa(x) Rb(x)"),
      make(3, "Wa(x) Wb(x)"),
      make(4, "Ra(x) Wb(x) Ra(x)"),
      make(5, "Wa(x) Wb(x) Ra(x)"),
      make(6, "Wa(x) Rb(x) Wa(x)"),
      make(7, "Ra(x) Wb(x) Wa(x)"),
      make(8, "Wa(x) Wb(x) Wa(x)"),
      make(9, "Wa(x) Wb(x) Wb(y) Wa(y)"),
      make(10, "Wa(x) Wb(y) Wb(x) Wa(y)"),
      make(11, "Wa(x) Wb(y) Wa(y) Wb(x)"),
      make(12, "Wa(x) Rb(x) Rb(y) Wa(y)"),
      make(13, "Wa(x) Rb(y) Rb(x) Wa(y)"),
      make(14, "Ra(x) Wb(x) Wb(y) Ra(y)"),
      make(15, "Ra(x) Wb(y) Wb(x) Ra(y)"),
      make(16, "Ra(x) Wb(y) Ra(y) Wb(x)"),
      make(17, "Wa(x) Rb(y) Wa(y) Rb(x)"),
  };
  return patterns;
}

std::set<int> match_window(const TraceWindow& w) {
  std::set<int> out;
  for (const Pattern& p : catalog()) {
    if (p.entries.size() != w.size()) continue;
    Binding b;
    bool ok = true;
    for (std::size_t i = 0; i < w.size() && ok; ++i) ok = b.accepts(p.entries[i], w[i]);
    if (ok) out.insert(p.id);
  }
  return out;
}

Classification classify_bug(const DetectionResult& trace) {
  Classification c;
  if (trace.verdict == Verdict::Deadlock) {
    c.bug_class = "deadlock";
    return c;
  }
  std::vector<WindowEvent> events;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < trace.trace.size(); ++i) {
    const TraceEvent& e = trace.trace[i];
    if (!e.is_access()) continue;
    events.push_back(WindowEvent{e.thread, e.kind == "R" ? AccessOp::Read : AccessOp::Write, e.loc});
    origin.push_back(i);
  }
  for (const Pattern& p : catalog()) {
    std::vector<std::size_t> positions;
    if (!search(p, events, 0, 0, Binding{}, positions)) continue;
    for (auto& pos : positions) pos = origin[pos];
    c.pattern_ids.insert(p.id);
    c.witnesses.push_back(PatternWitness{p.id, positions});
  }
  if (c.pattern_ids.empty()) {
    if (trace.verdict == Verdict::AssertionFailure) {
      throw NoPatternFound("failing trace matches none of the 17 access patterns");
    }
    c.bug_class = "none";
    return c;
  }
  bool atomicity = c.pattern_ids.lower_bound(4) != c.pattern_ids.end();
  c.bug_class = atomicity ? "atomicity violation" : "data race / order violation";
  return c;
}

std::string Classification::to_json() const {
  nlohmann::json w = nlohmann::json::array();
  for (const PatternWitness& pw : witnesses) {
    w.push_back({{"id", pw.id}, {"pattern", catalog()[pw.id - 1].str()}, {"events", pw.positions}});
  }
  nlohmann::json out{{"class", bug_class}, {"patterns", pattern_ids}, {"witnesses", w}};
  return out.dump(2);
}

}  // namespace confx
