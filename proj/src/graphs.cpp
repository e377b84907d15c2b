#include "confx/graphs.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace confx {

std::set<MethodId> CallGraph::callers(const MethodId& m) const {
  std::set<MethodId> out;
  for (const auto& [from, to] : edges) {
    if (to == m) out.insert(from);
  }
  return out;
}

std::set<MethodId> CallGraph::callees(const MethodId& m) const {
  std::set<MethodId> out;
  for (const auto& [from, to] : edges) {
    if (from == m) out.insert(to);
  }
  return out;
}

CallGraph build_call_graph(const Program& p) {
  CallGraph cg;
  std::map<MethodId, std::set<MethodId>> spawned_by;
  for (const auto& [name, m] : p.methods) {
    cg.nodes.insert(name);
    for_each_stmt(m.statements, [&](const Stmt& s) {
      if (s.kind == StmtKind::Call || s.kind == StmtKind::Spawn) cg.edges.emplace(name, s.callee);
      if (s.kind == StmtKind::Spawn) spawned_by[name].insert(s.callee);
    });
  }
  std::set<MethodId> seen{p.entry};
  std::deque<MethodId> work{p.entry};
  cg.roots.insert(p.entry);
  while (!work.empty()) {
    MethodId cur = work.front();
    work.pop_front();
    for (const MethodId& s : spawned_by[cur]) cg.roots.insert(s);
    for (const MethodId& next : cg.callees(cur)) {
      if (seen.insert(next).second) work.push_back(next);
    }
  }
  for (const MethodId& n : cg.nodes) {
    if (!seen.count(n)) cg.unreachable.insert(n);
  }
  return cg;
}

std::string StaticThreadId::str() const {
  std::string out = "main";
  for (const StatementId& s : chain) out += "/" + s.str();
  return out;
}

std::string_view to_string(AccessOp op) { return op == AccessOp::Read ? "R" : "W"; }

std::string_view to_string(HbRelation r) {
  switch (r) {
    case HbRelation::Before: return "before";
    case HbRelation::After: return "after";
    case HbRelation::Parallel: return "parallel";
  }
  return "?";
}

std::string Event::str() const {
  return "(" + thread.str() + ", " + statement.str() + ", " + std::string(to_string(op)) + "(" +
         location + "))";
}

bool Event::operator<(const Event& o) const {
  if (!(thread == o.thread)) return thread < o.thread;
  if (statement != o.statement) return statement < o.statement;
  if (op != o.op) return op < o.op;
  return location < o.location;
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

using Bits = boost::dynamic_bitset<std::uint64_t>;

struct ThreadBuild {
  StaticThreadId id;
  MethodId root;
  std::vector<std::size_t> spawn_groups;  // parent groups holding spawn occurrences
  std::size_t parent = kNone;
  std::size_t start = kNone;
  std::size_t end = kNone;
  std::vector<std::vector<std::size_t>> groups;  // program-order antichains
  std::vector<std::size_t> barriers;             // barriers[i] sits between groups i and i+1
};

struct SpawnRecord {
  std::vector<StatementId> chain;
  std::size_t group;
};

struct PendingJoin {
  std::size_t node;
  std::size_t group;
  std::optional<SpawnRecord> spawn;
  bool unique_spawn;
};

struct Frame {
  const MethodBody* method;
  int depth;
  std::map<int, SpawnRecord> handles;
};

struct HeldEntry {
  std::string lock;
  StatementId site;
  bool reentrant;
};

}  // namespace

namespace detail {

class ShbgBuilder {
 public:
  ShbgBuilder(const Program& p, const CallGraph& cg, const ShbgOptions& opt)
      : p_(p), cg_(cg), opt_(opt) {
    for (const auto& [name, m] : p.methods) {
      for_each_stmt(m.statements, [&](const Stmt& s) {
        if (s.kind == StmtKind::Spawn && s.slot >= 0) ++spawns_per_handle_[{name, s.slot}];
      });
    }
  }

  StaticHappensBeforeGraph run() {
    ThreadBuild main;
    main.root = p_.entry;
    threads_.push_back(std::move(main));
    for (std::size_t i = 0; i < threads_.size(); ++i) process_thread(i);
    return finish();
  }

 private:
  std::size_t new_node() {
    succ_.emplace_back();
    node_thread_.push_back(cur_);
    return succ_.size() - 1;
  }

  void edge(std::size_t from, std::size_t to) { succ_[from].push_back(to); }

  ThreadBuild& cur() { return threads_[cur_]; }

  // Places a node into the program-order structure of the current thread and
  // returns the index of its group.
  std::size_t emit(std::size_t node) {
    ThreadBuild& t = cur();
    if (cur_multi_) {
      if (t.groups.size() == 1) t.groups.emplace_back();
    } else if (loop_depth_ == 0 || need_group_) {
      t.groups.emplace_back();
      need_group_ = false;
    }
    t.groups.back().push_back(node);
    return t.groups.size() - 1;
  }

  void process_thread(std::size_t index) {
    cur_ = index;
    cur_multi_ = cur().id.may_have_multiple_instances;
    loop_depth_ = 0;
    need_group_ = false;
    held_.clear();
    spawn_occurrences_.clear();
    pending_joins_.clear();

    cur().start = new_node();
    cur().groups.push_back({cur().start});

    const MethodBody& root = p_.method(cur().root);
    Frame frame{&root, 0, {}};
    inline_block(root.statements, frame);

    need_group_ = false;
    loop_depth_ = 0;
    bool saved_multi = cur_multi_;
    cur_multi_ = false;
    cur().end = new_node();
    emit(cur().end);
    cur_multi_ = saved_multi;

    // barriers between consecutive program-order groups
    ThreadBuild& t = cur();
    for (std::size_t g = 0; g + 1 < t.groups.size(); ++g) {
      std::size_t b = new_node();
      t.barriers.push_back(b);
      for (std::size_t n : t.groups[g]) edge(n, b);
      for (std::size_t n : t.groups[g + 1]) edge(b, n);
    }

    // spawned children, in discovery order
    for (auto& [chain, groups] : spawn_occurrences_) {
      ThreadBuild child;
      child.id.chain = chain;
      child.parent = index;
      child.spawn_groups = groups;
      child.root = p_.find_statement(chain.back())->callee;
      child.id.may_have_multiple_instances = cur_multi_ || groups.size() > 1 || loop_spawn_.count(chain);
      threads_.push_back(std::move(child));
    }

    for (const PendingJoin& j : pending_joins_) {
      if (!j.spawn || !j.unique_spawn || j.spawn->group >= j.group) continue;
      auto child = find_thread(j.spawn->chain);
      if (child == kNone || threads_[child].id.may_have_multiple_instances) continue;
      join_edges_.emplace_back(child, j.node);
    }
  }

  std::size_t find_thread(const std::vector<StatementId>& chain) const {
    for (std::size_t i = 0; i < threads_.size(); ++i) {
      if (threads_[i].id.chain == chain) return i;
    }
    return kNone;
  }

  void inline_block(const std::vector<Stmt>& stmts, Frame& frame) {
    for (const Stmt& s : stmts) inline_stmt(s, frame);
  }

  void reads(const Expr& e, const Stmt& s) {
    for (const Expr& child : e.operands) reads(child, s);
    if (e.kind == ExprKind::Global) access(s, AccessOp::Read, e.name);
  }

  void access(const Stmt& s, AccessOp op, const std::string& loc) {
    std::size_t n = new_node();
    emit(n);
    Event ev{cur().id, s.id, op, loc};
    occurrences_[ev].push_back(n);
  }

  void sync(const Stmt& s, SyncSite::Kind kind, bool reentrant = false) {
    std::size_t n = new_node();
    emit(n);
    SyncSite site;
    site.kind = kind;
    site.thread = cur_;
    site.statement = s.id;
    site.object = s.target;
    site.reentrant = reentrant;
    site.node = n;
    for (const HeldEntry& h : held_) {
      if (!h.reentrant) site.held.push_back(HeldLock{h.lock, h.site});
    }
    sync_.push_back(std::move(site));
  }

  bool holds(const std::string& lock) const {
    return std::any_of(held_.begin(), held_.end(), [&](const HeldEntry& h) { return h.lock == lock; });
  }

  void inline_stmt(const Stmt& s, Frame& frame) {
    switch (s.kind) {
      case StmtKind::Assign:
        reads(s.expr, s);
        if (s.target_is_global) access(s, AccessOp::Write, s.target);
        break;
      case StmtKind::If:
        reads(s.expr, s);
        inline_block(s.body, frame);
        inline_block(s.else_body, frame);
        break;
      case StmtKind::BoundedWhile:
        if (loop_depth_++ == 0) need_group_ = true;
        reads(s.expr, s);
        inline_block(s.body, frame);
        if (--loop_depth_ == 0) need_group_ = false;
        break;
      case StmtKind::Lock: {
        bool reentrant = holds(s.target);
        sync(s, SyncSite::Kind::Acquire, reentrant);
        held_.push_back(HeldEntry{s.target, s.id, reentrant});
        inline_block(s.body, frame);
        held_.pop_back();
        break;
      }
      case StmtKind::Wait:
        sync(s, SyncSite::Kind::Wait);
        break;
      case StmtKind::Notify:
        sync(s, SyncSite::Kind::Notify);
        break;
      case StmtKind::NotifyAll:
        sync(s, SyncSite::Kind::NotifyAll);
        break;
      case StmtKind::Spawn: {
        for (const Expr& a : s.args) reads(a, s);
        std::vector<StatementId> chain = cur().id.chain;
        chain.push_back(s.id);
        if (static_cast<int>(chain.size()) > opt_.max_inline_depth) {
          throw RecursionError("spawn nesting deeper than " +
                               std::to_string(opt_.max_inline_depth) + " at " + s.id.str());
        }
        std::size_t n = new_node();
        std::size_t group = emit(n);
        auto& occ = spawn_occurrences_[chain];
        occ.push_back(group);
        if (loop_depth_ > 0) loop_spawn_.insert(chain);
        if (s.slot >= 0) frame.handles[s.slot] = SpawnRecord{chain, group};
        break;
      }
      case StmtKind::Join: {
        std::size_t n = new_node();
        std::size_t group = emit(n);
        PendingJoin j{n, group, std::nullopt, false};
        auto rec = frame.handles.find(s.slot);
        if (rec != frame.handles.end()) j.spawn = rec->second;
        auto count = spawns_per_handle_.find({frame.method->name, s.slot});
        j.unique_spawn = count != spawns_per_handle_.end() && count->second == 1;
        pending_joins_.push_back(std::move(j));
        break;
      }
      case StmtKind::Call: {
        for (const Expr& a : s.args) reads(a, s);
        if (frame.depth + 1 > opt_.max_inline_depth) {
          throw RecursionError("call inlining deeper than " +
                               std::to_string(opt_.max_inline_depth) + " at " + s.id.str());
        }
        if (!cg_.reachable(s.callee)) throw Error("call to unreachable method " + s.callee);
        const MethodBody& callee = p_.method(s.callee);
        Frame inner{&callee, frame.depth + 1, {}};
        inline_block(callee.statements, inner);
        break;
      }
      case StmtKind::Assert:
        reads(s.expr, s);
        break;
      case StmtKind::Skip:
        break;
    }
  }

  StaticHappensBeforeGraph finish() {
    // fork edges: everything before the first spawn occurrence precedes the child
    for (std::size_t i = 1; i < threads_.size(); ++i) {
      const ThreadBuild& child = threads_[i];
      const ThreadBuild& parent = threads_[child.parent];
      std::size_t first = *std::min_element(child.spawn_groups.begin(), child.spawn_groups.end());
      edge(parent.barriers[first - 1], child.start);
    }
    for (const auto& [child, join] : join_edges_) edge(threads_[child].end, join);

    const std::size_t n = succ_.size();
    std::vector<std::size_t> indegree(n, 0);
    for (const auto& out : succ_) {
      for (std::size_t t : out) ++indegree[t];
    }
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] == 0) order.push_back(i);
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
      for (std::size_t t : succ_[order[k]]) {
        if (--indegree[t] == 0) order.push_back(t);
      }
    }
    if (order.size() != n) throw Error("internal error: happens-before graph has a cycle");

    StaticHappensBeforeGraph g;
    g.reach_.assign(n, Bits(n));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Bits& r = g.reach_[*it];
      for (std::size_t t : succ_[*it]) {
        r.set(t);
        r |= g.reach_[t];
      }
    }

    std::vector<std::vector<std::size_t>> occ;
    for (auto& [ev, nodes] : occurrences_) {
      g.events_.push_back(ev);
      occ.push_back(nodes);
    }
    const std::size_t events = g.events_.size();
    g.before_.assign(events, Bits(events));
    for (std::size_t a = 0; a < events; ++a) {
      Bits common = g.reach_[occ[a].front()];
      for (std::size_t k = 1; k < occ[a].size(); ++k) common &= g.reach_[occ[a][k]];
      if (common.none()) continue;
      for (std::size_t b = 0; b < events; ++b) {
        if (a == b) continue;
        bool all = std::all_of(occ[b].begin(), occ[b].end(),
                               [&](std::size_t o) { return common.test(o); });
        if (all) g.before_[a].set(b);
      }
    }
    for (const ThreadBuild& t : threads_) g.threads_.push_back(t.id);
    g.sync_ = std::move(sync_);
    g.node_thread_ = std::move(node_thread_);
    return g;
  }

  const Program& p_;
  const CallGraph& cg_;
  ShbgOptions opt_;

  std::vector<ThreadBuild> threads_;
  std::vector<std::vector<std::size_t>> succ_;
  std::vector<std::size_t> node_thread_;
  std::map<Event, std::vector<std::size_t>> occurrences_;
  std::vector<SyncSite> sync_;
  std::vector<std::pair<std::size_t, std::size_t>> join_edges_;
  std::map<std::pair<MethodId, int>, int> spawns_per_handle_;

  // per-thread state
  std::size_t cur_ = 0;
  bool cur_multi_ = false;
  int loop_depth_ = 0;
  bool need_group_ = false;
  std::vector<HeldEntry> held_;
  std::map<std::vector<StatementId>, std::vector<std::size_t>> spawn_occurrences_;
  std::set<std::vector<StatementId>> loop_spawn_;
  std::vector<PendingJoin> pending_joins_;
};

}  // namespace detail

std::optional<std::size_t> StaticHappensBeforeGraph::index_of(const Event& e) const {
  auto it = std::lower_bound(events_.begin(), events_.end(), e);
  if (it == events_.end() || !(*it == e)) return std::nullopt;
  return static_cast<std::size_t>(it - events_.begin());
}

HbRelation StaticHappensBeforeGraph::classify(std::size_t a, std::size_t b) const {
  if (a == b) throw Error("hb classification of an event with itself");
  if (before_[a].test(b)) return HbRelation::Before;
  if (before_[b].test(a)) return HbRelation::After;
  return HbRelation::Parallel;
}

std::vector<std::pair<std::size_t, std::size_t>> StaticHappensBeforeGraph::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = events_.size();
  for (std::size_t a = 0; a < n; ++a) {
    Bits covered(n);
    for (auto k = before_[a].find_first(); k != Bits::npos; k = before_[a].find_next(k)) {
      covered |= before_[k];
    }
    Bits direct = before_[a] - covered;
    for (auto b = direct.find_first(); b != Bits::npos; b = direct.find_next(b)) {
      out.emplace_back(a, b);
    }
  }
  return out;
}

bool StaticHappensBeforeGraph::may_run_in_parallel(const SyncSite& a, const SyncSite& b) const {
  if (reach_[a.node].test(b.node) || reach_[b.node].test(a.node)) return false;
  if (a.thread != b.thread) return true;
  return threads_[a.thread].may_have_multiple_instances;
}

std::string StaticHappensBeforeGraph::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const Event& e : events_) {
    nodes.push_back({{"thread", e.thread.str()},
                     {"stmt", e.statement.str()},
                     {"op", std::string(to_string(e.op))},
                     {"loc", e.location}});
  }
  nlohmann::json edges_json = nlohmann::json::array();
  for (const auto& [a, b] : edges()) edges_json.push_back({a, b});
  nlohmann::json out{{"nodes", nodes}, {"edges", edges_json}};
  return out.dump(2);
}

std::string StaticHappensBeforeGraph::to_dot() const {
  std::ostringstream out;
  out << "digraph shbg {\n  node [shape=box];\n";
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const Event& e = events_[i];
    out << "  e" << i << " [label=\"" << e.thread.str() << "\\n" << e.statement.str() << " "
        << to_string(e.op) << "(" << e.location << ")\"];\n";
  }
  for (const auto& [a, b] : edges()) out << "  e" << a << " -> e" << b << ";\n";
  out << "}\n";
  return out.str();
}

StaticHappensBeforeGraph build_shbg(const Program& p, const CallGraph& cg,
                                    const ShbgOptions& options) {
  return detail::ShbgBuilder(p, cg, options).run();
}

HbRelation hb_classify(const StaticHappensBeforeGraph& g, const Event& a, const Event& b) {
  auto ia = g.index_of(a);
  auto ib = g.index_of(b);
  if (!ia) throw UnknownEvent("event not in graph: " + a.str());
  if (!ib) throw UnknownEvent("event not in graph: " + b.str());
  return g.classify(*ia, *ib);
}

}  // namespace confx
