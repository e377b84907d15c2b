// Memory-access interleaving patterns and trace classification.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "confx/explorer.hpp"
#include "confx/graphs.hpp"

namespace confx {

class NoPatternFound : public Error {
  using Error::Error;
};

struct PatternEntry {
  char thread;  // 'a' or 'b'
  AccessOp op;
  char loc;  // 'x' or 'y'

  bool operator==(const PatternEntry&) const = default;
};

struct Pattern {
  int id = 0;
  std::vector<PatternEntry> entries;

  bool uses_two_locations() const;
  std::string str() const;  // e.g. "Wa(x) Rb(y) Wa(y) Rb(x)"
};

/// The 17 patterns, in id order.
const std::vector<Pattern>& catalog();

struct WindowEvent {
  int thread = 0;
  AccessOp op = AccessOp::Read;
  std::string loc;
};

using TraceWindow = std::vector<WindowEvent>;

/// Ids of every pattern whose template unifies with `w` entry by entry.
std::set<int> match_window(const TraceWindow& w);

struct PatternWitness {
  int id = 0;
  std::vector<std::size_t> positions;  // indices into the trace's event list
};

struct Classification {
  std::string bug_class;  // "deadlock", "atomicity violation", "data race / order violation", "none"
  std::set<int> pattern_ids;
  std::vector<PatternWitness> witnesses;  // first occurrence per matched id

  std::string to_json() const;
};

/// Finds every pattern occurring as an order-preserving subsequence of the
/// shared-memory accesses in `trace`. Deadlock traces are not scanned.
/// Throws NoPatternFound for a failing, non-deadlock trace with no match.
Classification classify_bug(const DetectionResult& trace);

}  // namespace confx
