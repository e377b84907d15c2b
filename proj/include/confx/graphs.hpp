// Call graph and Static Happens-Before Graph (SHBG).
#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "confx/lang.hpp"

namespace confx {

class RecursionError : public Error {
  using Error::Error;
};
class UnknownEvent : public Error {
  using Error::Error;
};

struct CallGraph {
  std::set<MethodId> nodes;
  std::set<std::pair<MethodId, MethodId>> edges;  // caller -> callee, spawns included
  std::set<MethodId> roots;                       // entry plus reachable spawn targets
  std::set<MethodId> unreachable;

  bool reachable(const MethodId& m) const { return nodes.count(m) && !unreachable.count(m); }
  std::set<MethodId> callers(const MethodId& m) const;
  std::set<MethodId> callees(const MethodId& m) const;
};

CallGraph build_call_graph(const Program& p);

/// A thread as seen statically: the chain of spawn statements leading from
/// main to the spawn that created it. Main has the empty chain.
struct StaticThreadId {
  std::vector<StatementId> chain;
  bool may_have_multiple_instances = false;

  std::string str() const;
  bool operator==(const StaticThreadId& o) const { return chain == o.chain; }
  bool operator<(const StaticThreadId& o) const { return chain < o.chain; }
};

enum class AccessOp { Read, Write };

std::string_view to_string(AccessOp op);

struct Event {
  StaticThreadId thread;
  StatementId statement;
  AccessOp op = AccessOp::Read;
  std::string location;

  const MethodId& method() const { return statement.method; }
  std::string str() const;
  bool operator==(const Event& o) const {
    return thread == o.thread && statement == o.statement && op == o.op && location == o.location;
  }
  bool operator<(const Event& o) const;
};

enum class HbRelation { Before, After, Parallel };

std::string_view to_string(HbRelation r);

struct HeldLock {
  std::string lock;
  StatementId site;  // acquiring Lock statement
};

/// Synchronisation operation instantiated in one static thread context.
struct SyncSite {
  enum class Kind { Acquire, Wait, Notify, NotifyAll };
  Kind kind = Kind::Acquire;
  std::size_t thread = 0;  // index into threads()
  StatementId statement;
  std::string object;           // lock (Acquire) or condition variable
  std::vector<HeldLock> held;   // outermost first; for Acquire excludes the lock being taken
  bool reentrant = false;       // Acquire of a lock already held by this thread
  std::size_t node = 0;         // internal graph node
};

struct ShbgOptions {
  int max_inline_depth = 8;
};

namespace detail {
class ShbgBuilder;
}

class StaticHappensBeforeGraph {
 public:
  /// Events (read/write of shared globals), sorted.
  const std::vector<Event>& nodes() const { return events_; }
  const std::vector<StaticThreadId>& threads() const { return threads_; }
  const std::vector<SyncSite>& sync_sites() const { return sync_; }

  std::optional<std::size_t> index_of(const Event& e) const;

  /// True iff every execution of event `a` precedes every execution of `b`.
  bool happens_before(std::size_t a, std::size_t b) const { return before_[a].test(b); }
  HbRelation classify(std::size_t a, std::size_t b) const;
  bool multi_instance(std::size_t event) const {
    return events_[event].thread.may_have_multiple_instances;
  }

  /// Transitive reduction of the happens-before relation over events.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  /// Neither sync site is ordered before the other and they may belong to
  /// distinct running thread instances.
  bool may_run_in_parallel(const SyncSite& a, const SyncSite& b) const;

  std::string to_json() const;
  std::string to_dot() const;

 private:
  friend class detail::ShbgBuilder;

  std::vector<Event> events_;
  std::vector<StaticThreadId> threads_;
  std::vector<SyncSite> sync_;
  std::vector<boost::dynamic_bitset<std::uint64_t>> before_;  // over events
  std::vector<boost::dynamic_bitset<std::uint64_t>> reach_;   // over internal nodes
  std::vector<std::size_t> node_thread_;
};

/// Builds the SHBG by inlining calls per static thread. Throws RecursionError
/// when inlining nests deeper than `options.max_inline_depth`.
StaticHappensBeforeGraph build_shbg(const Program& p, const CallGraph& cg,
                                    const ShbgOptions& options = {});

/// Throws UnknownEvent if either event is not a node of `g`.
HbRelation hb_classify(const StaticHappensBeforeGraph& g, const Event& a, const Event& b);

}  // namespace confx
