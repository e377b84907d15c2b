// Conflict detection, relevance classification, deadlock candidates and
// the marked-method computation used by context extraction.
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "confx/graphs.hpp"
#include "confx/lang.hpp"

namespace confx {

enum class MarkReason { DeadlockRelevant, SemanticsRelevant, BugRelevant, ClosureAncestor };

std::string_view to_string(MarkReason r);

struct MarkedMethodSet {
  std::set<MethodId> methods;
  std::map<MethodId, MarkReason> provenance;

  bool contains(const MethodId& m) const { return methods.count(m) != 0; }
  std::string to_json() const;
};

struct DeadlockCandidate {
  enum class Kind { Resource, Communication };
  Kind kind = Kind::Resource;
  std::vector<StatementId> sites;
  std::set<MethodId> methods;
  std::vector<std::string> locks;  // cycle for Resource; outer lock(s) for Communication
  std::string description;
};

bool is_conflicting(const Event& a, const Event& b);

std::set<Event> bug_relevant_events(const StaticHappensBeforeGraph& g);

/// Methods containing at least one bug-relevant event. Stops examining a
/// method's events as soon as one qualifies.
std::set<MethodId> bug_relevant_methods(const StaticHappensBeforeGraph& g);

std::set<MethodId> semantics_relevant_methods(const Program& p);

std::vector<DeadlockCandidate> detect_deadlocks(const StaticHappensBeforeGraph& g, const Program& p);

MarkedMethodSet mark_methods(const Program& p, const ShbgOptions& options = {});

/// Breadth-first closure over reverse call edges, restricted to reachable
/// methods. Newly added methods are tagged ClosureAncestor.
void close_over_callers(MarkedMethodSet& marks, const CallGraph& cg);

std::size_t count_locks_added(const Program& original, const Program& patched);

}  // namespace confx
