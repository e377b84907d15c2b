#include "confx/analysis.hpp"

#include <algorithm>
#include <deque>
#include <functional>

#include <nlohmann/json.hpp>

namespace confx {

std::string_view to_string(MarkReason r) {
  switch (r) {
    case MarkReason::DeadlockRelevant: return "DeadlockRelevant";
    case MarkReason::SemanticsRelevant: return "SemanticsRelevant";
    case MarkReason::BugRelevant: return "BugRelevant";
    case MarkReason::ClosureAncestor: return "ClosureAncestor";
  }
  return "?";
}

std::string MarkedMethodSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const MethodId& m : methods) {
    out.push_back({{"method", m}, {"reason", std::string(to_string(provenance.at(m)))}});
  }
  return nlohmann::json{{"marked", out}}.dump(2);
}

bool is_conflicting(const Event& a, const Event& b) {
  if (a.location != b.location) return false;
  if (a.op != AccessOp::Write && b.op != AccessOp::Write) return false;
  if (a.thread == b.thread) return a.thread.may_have_multiple_instances;
  return true;
}

namespace {

bool has_parallel_conflict(const StaticHappensBeforeGraph& g, std::size_t e,
                           const std::vector<std::size_t>& same_location) {
  const auto& events = g.nodes();
  for (std::size_t other : same_location) {
    if (!is_conflicting(events[e], events[other])) continue;
    if (other == e) return true;  // several instances of one write
    if (g.classify(e, other) == HbRelation::Parallel) return true;
  }
  return false;
}

std::map<std::string, std::vector<std::size_t>> by_location(const StaticHappensBeforeGraph& g) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) out[g.nodes()[i].location].push_back(i);
  return out;
}

}  // namespace

std::set<Event> bug_relevant_events(const StaticHappensBeforeGraph& g) {
  std::set<Event> out;
  for (const auto& [loc, group] : by_location(g)) {
    for (std::size_t e : group) {
      if (has_parallel_conflict(g, e, group)) out.insert(g.nodes()[e]);
    }
  }
  return out;
}

std::set<MethodId> bug_relevant_methods(const StaticHappensBeforeGraph& g) {
  auto groups = by_location(g);
  std::map<MethodId, std::vector<std::size_t>> per_method;
  for (std::size_t i = 0; i < g.nodes().size(); ++i) per_method[g.nodes()[i].method()].push_back(i);
  std::set<MethodId> out;
  for (const auto& [method, events] : per_method) {
    for (std::size_t e : events) {
      if (has_parallel_conflict(g, e, groups[g.nodes()[e].location])) {
        out.insert(method);
        break;
      }
    }
  }
  return out;
}

std::set<MethodId> semantics_relevant_methods(const Program& p) {
  std::set<MethodId> out;
  for (const auto& [name, m] : p.methods) {
    for_each_stmt(m.statements, [&](const Stmt& s) {
      if (s.kind == StmtKind::Spawn || s.kind == StmtKind::Join) out.insert(name);
    });
  }
  return out;
}

namespace {

struct OrderEdgeInstance {
  StatementId outer;  // site that took the held lock
  std::size_t inner;  // index into sync_sites(): the acquisition made while holding
};

using LockGraph = std::map<std::string, std::map<std::string, std::vector<OrderEdgeInstance>>>;

LockGraph lock_order_graph(const StaticHappensBeforeGraph& g, const Program& p) {
  LockGraph graph;
  const auto& sites = g.sync_sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const SyncSite& s = sites[i];
    std::string taken;
    if (s.kind == SyncSite::Kind::Acquire && !s.reentrant) {
      taken = s.object;
    } else if (s.kind == SyncSite::Kind::Wait) {
      taken = p.find_cond(s.object)->monitor;  // reacquired on wake-up
    } else {
      continue;
    }
    for (const HeldLock& h : s.held) {
      if (h.lock == taken) continue;
      graph[h.lock][taken].push_back(OrderEdgeInstance{h.site, i});
    }
  }
  return graph;
}

std::vector<std::vector<std::string>> simple_cycles(const LockGraph& graph) {
  std::vector<std::vector<std::string>> cycles;
  std::vector<std::string> path;
  std::set<std::string> on_path;
  std::function<void(const std::string&, const std::string&)> dfs = [&](const std::string& start,
                                                                        const std::string& cur) {
    auto it = graph.find(cur);
    if (it == graph.end()) return;
    for (const auto& [next, instances] : it->second) {
      if (next == start) {
        cycles.push_back(path);
      } else if (next > start && !on_path.count(next)) {
        path.push_back(next);
        on_path.insert(next);
        dfs(start, next);
        on_path.erase(next);
        path.pop_back();
      }
    }
  };
  for (const auto& [start, out] : graph) {
    path = {start};
    on_path = {start};
    dfs(start, start);
  }
  return cycles;
}

bool assign_instances(const StaticHappensBeforeGraph& g, const LockGraph& graph,
                      const std::vector<std::string>& cycle, std::vector<OrderEdgeInstance>& chosen) {
  std::size_t k = chosen.size();
  if (k == cycle.size()) return true;
  const auto& from = cycle[k];
  const auto& to = cycle[(k + 1) % cycle.size()];
  for (const OrderEdgeInstance& inst : graph.at(from).at(to)) {
    const SyncSite& site = g.sync_sites()[inst.inner];
    bool ok = std::all_of(chosen.begin(), chosen.end(), [&](const OrderEdgeInstance& c) {
      return g.may_run_in_parallel(site, g.sync_sites()[c.inner]);
    });
    if (!ok) continue;
    chosen.push_back(inst);
    if (assign_instances(g, graph, cycle, chosen)) return true;
    chosen.pop_back();
  }
  return false;
}

void add_site(std::vector<StatementId>& sites, const StatementId& s) {
  if (std::find(sites.begin(), sites.end(), s) == sites.end()) sites.push_back(s);
}

}  // namespace

std::vector<DeadlockCandidate> detect_deadlocks(const StaticHappensBeforeGraph& g, const Program& p) {
  std::vector<DeadlockCandidate> out;

  LockGraph graph = lock_order_graph(g, p);
  for (const auto& cycle : simple_cycles(graph)) {
    std::vector<OrderEdgeInstance> chosen;
    if (!assign_instances(g, graph, cycle, chosen)) continue;
    DeadlockCandidate c;
    c.kind = DeadlockCandidate::Kind::Resource;
    c.locks = cycle;
    for (const OrderEdgeInstance& inst : chosen) {
      const StatementId& inner = g.sync_sites()[inst.inner].statement;
      add_site(c.sites, inst.outer);
      add_site(c.sites, inner);
      c.methods.insert(inst.outer.method);
      c.methods.insert(inner.method);
    }
    c.description = "lock-order cycle";
    for (const auto& l : cycle) c.description += " " + l + " ->";
    c.description += " " + cycle.front();
    out.push_back(std::move(c));
  }

  const auto& sites = g.sync_sites();
  for (const SyncSite& w : sites) {
    if (w.kind != SyncSite::Kind::Wait) continue;
    const std::string& monitor = p.find_cond(w.object)->monitor;
    std::vector<const SyncSite*> notifiers;
    for (const SyncSite& n : sites) {
      bool notifies = n.kind == SyncSite::Kind::Notify || n.kind == SyncSite::Kind::NotifyAll;
      if (notifies && n.object == w.object && g.may_run_in_parallel(w, n)) notifiers.push_back(&n);
    }
    if (notifiers.empty()) {
      DeadlockCandidate c;
      c.kind = DeadlockCandidate::Kind::Communication;
      c.sites = {w.statement};
      c.methods = {w.statement.method};
      c.description = "wait at " + w.statement.str() + " on " + w.object +
                      " has no notifier that can run concurrently";
      out.push_back(std::move(c));
      continue;
    }
    for (const HeldLock& outer : w.held) {
      if (outer.lock == monitor) continue;
      bool all_need = std::all_of(notifiers.begin(), notifiers.end(), [&](const SyncSite* n) {
        return std::any_of(n->held.begin(), n->held.end(),
                           [&](const HeldLock& h) { return h.lock == outer.lock; });
      });
      if (!all_need) continue;
      bool duplicate = std::any_of(out.begin(), out.end(), [&](const DeadlockCandidate& c) {
        return c.kind == DeadlockCandidate::Kind::Communication && c.sites.size() == 2 &&
               c.sites[0] == w.statement && c.sites[1] == outer.site;
      });
      if (duplicate) continue;
      DeadlockCandidate c;
      c.kind = DeadlockCandidate::Kind::Communication;
      c.sites = {w.statement, outer.site};
      c.locks = {outer.lock};
      c.methods = {w.statement.method};
      for (const SyncSite* n : notifiers) c.methods.insert(n->statement.method);
      c.description = "wait at " + w.statement.str() + " on " + w.object + " keeps " + outer.lock +
                      " locked, and every notifier needs " + outer.lock;
      out.push_back(std::move(c));
    }
  }
  return out;
}

void close_over_callers(MarkedMethodSet& marks, const CallGraph& cg) {
  std::map<MethodId, std::set<MethodId>> callers;
  for (const auto& [from, to] : cg.edges) callers[to].insert(from);
  std::deque<MethodId> work(marks.methods.begin(), marks.methods.end());
  while (!work.empty()) {
    MethodId m = work.front();
    work.pop_front();
    for (const MethodId& caller : callers[m]) {
      if (!cg.reachable(caller)) continue;
      if (marks.methods.insert(caller).second) {
        marks.provenance[caller] = MarkReason::ClosureAncestor;
        work.push_back(caller);
      }
    }
  }
}

MarkedMethodSet mark_methods(const Program& p, const ShbgOptions& options) {
  CallGraph cg = build_call_graph(p);
  StaticHappensBeforeGraph g = build_shbg(p, cg, options);
  MarkedMethodSet marks;
  auto mark = [&](const MethodId& m, MarkReason r) {
    if (!cg.reachable(m)) return;
    if (marks.methods.insert(m).second) marks.provenance[m] = r;
  };
  for (const DeadlockCandidate& c : detect_deadlocks(g, p)) {
    for (const MethodId& m : c.methods) mark(m, MarkReason::DeadlockRelevant);
  }
  for (const MethodId& m : semantics_relevant_methods(p)) mark(m, MarkReason::SemanticsRelevant);
  for (const MethodId& m : bug_relevant_methods(g)) mark(m, MarkReason::BugRelevant);
  close_over_callers(marks, cg);
  return marks;
}

std::size_t count_locks_added(const Program& original, const Program& patched) {
  std::size_t before = count_lock_blocks(original);
  std::size_t after = count_lock_blocks(patched);
  return after > before ? after - before : 0;
}

}  // namespace confx
