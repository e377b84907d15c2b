// Bytecode interpreter for MiniConc with controllable scheduling, exhaustive
// and random schedule exploration, and replay.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "confx/lang.hpp"

namespace confx {

class InvalidSchedule : public Error {
  using Error::Error;
};
class BoundExceeded : public Error {
  using Error::Error;
};

using Schedule = std::vector<int>;

struct TraceEvent {
  int thread = 0;
  StatementId stmt;
  std::string kind;  // R W acquire release wait reacquire notify notifyAll spawn join
  std::string loc;   // variable, lock or condition name

  bool is_access() const { return kind == "R" || kind == "W"; }
};

enum class Verdict { NoBugFound, AssertionFailure, Deadlock };

std::string_view to_string(Verdict v);

struct Fault {
  std::string kind;  // "assertion", "division by zero", "illegal monitor state"
  int thread = 0;
  StatementId stmt;
  std::string message;
};

enum class ThreadStatus { Running, Waiting, Reacquiring, Done };

struct ThreadView {
  int id = 0;
  std::vector<StatementId> chain;  // spawn sites from main
  MethodId root;
  ThreadStatus status = ThreadStatus::Running;
  std::optional<StatementId> at;   // statement of the next operation
  std::string next_kind;           // next visible operation kind
  std::string next_object;         // its lock, condition or variable
  std::vector<std::string> held;   // locks owned
};

namespace detail {
struct Code;
}

/// One configuration of the interpreter. Every step runs exactly one
/// visible operation (shared access, lock, condition or thread operation)
/// followed by the thread-local work up to the next visible operation.
class State {
 public:
  explicit State(const Program& p);

  std::vector<int> runnable() const;
  /// Executes one step of thread `tid` and returns the visible events it
  /// produced. Throws InvalidSchedule if `tid` is not runnable.
  std::vector<TraceEvent> step(int tid);

  bool finished() const;    // every thread done
  bool deadlocked() const;  // some thread alive, none runnable, no fault
  const std::optional<Fault>& fault() const { return fault_; }
  bool terminal() const { return fault_.has_value() || runnable().empty(); }

  std::string serialize() const;
  std::size_t thread_count() const { return threads_.size(); }
  ThreadView view(int tid) const;
  std::int64_t global(std::string_view name) const;

  struct Frame {
    int method = 0;
    int pc = 0;
    std::vector<std::int64_t> locals;
  };
  struct Thread {
    std::vector<Frame> frames;
    std::vector<std::int64_t> stack;
    ThreadStatus status = ThreadStatus::Running;
    int wait_cond = -1;
    int saved_count = 0;
    int root = -1;
    std::vector<StatementId> chain;
  };
  struct LockState {
    int owner = -1;
    int count = 0;
  };

 private:
  void run_local(int tid, std::vector<TraceEvent>& out);
  void fail(int tid, std::string kind, std::string message);
  bool enabled(int tid) const;

  std::shared_ptr<const detail::Code> code_;
  std::vector<std::int64_t> globals_;
  std::vector<LockState> locks_;
  std::vector<std::vector<int>> cond_queues_;
  std::vector<Thread> threads_;
  std::optional<Fault> fault_;
};

struct DetectionStats {
  std::size_t schedules = 0;
  std::size_t states = 0;
  std::size_t runs = 0;
};

struct DetectionResult {
  Verdict verdict = Verdict::NoBugFound;
  Schedule failing_schedule;
  std::vector<TraceEvent> trace;
  std::vector<ThreadView> threads;  // final thread states of the failing run
  std::optional<Fault> fault;
  DetectionStats stats;
  bool partial = false;

  std::string trace_json() const;
};

struct ExploreOptions {
  std::size_t depth_bound = 10000;
  std::size_t max_states = 2'000'000;
  bool throw_on_bound = false;
};

/// Depth-first search over all schedules, lowest thread id first, pruning
/// revisited states. Returns the first failure found.
DetectionResult explore(const Program& p, const ExploreOptions& options = {});

DetectionResult run_random(const Program& p, std::size_t runs = 100, std::uint64_t seed = 0,
                           std::size_t depth_bound = 10000);

/// Follows `s`, then keeps stepping the lowest runnable thread until the
/// program terminates.
DetectionResult replay(const Program& p, const Schedule& s, std::size_t depth_bound = 10000);

struct BugReport {
  Verdict verdict = Verdict::NoBugFound;
  std::string symptom;
  std::vector<std::string> contexts;  // one line per thread
  DetectionResult result;

  std::string text() const;
  std::string to_json() const;
};

BugReport make_bug_report(const Program& p, const DetectionResult& r);

/// Reads the `{verdict, schedule, events}` document written by trace_json().
DetectionResult trace_from_json(std::string_view json);

}  // namespace confx
