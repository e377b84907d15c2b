#include "confx/explorer.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace confx {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::NoBugFound: return "NoBugFound";
    case Verdict::AssertionFailure: return "AssertionFailure";
    case Verdict::Deadlock: return "Deadlock";
  }
  return "?";
}

namespace detail {

enum class Op {
  Push,
  LoadLocal,
  StoreLocal,
  LoadGlobal,
  StoreGlobal,
  Unary,
  Binary,
  Jump,
  JumpIfFalse,
  JumpIfTrue,
  LoopInit,
  LoopCheck,
  Acquire,
  Release,
  Wait,
  Notify,
  NotifyAll,
  Spawn,
  Join,
  Call,
  Return,
  Assert,
};

bool visible(Op op) {
  switch (op) {
    case Op::LoadGlobal:
    case Op::StoreGlobal:
    case Op::Acquire:
    case Op::Release:
    case Op::Wait:
    case Op::Notify:
    case Op::NotifyAll:
    case Op::Spawn:
    case Op::Join:
      return true;
    default:
      return false;
  }
}

struct Instr {
  Op op;
  std::int64_t a = 0;
  int b = 0;
  int c = 0;
  std::string text;  // operator, or assertion text
  StatementId stmt;
};

struct MethodCode {
  MethodId name;
  std::vector<Instr> code;
  int frame_size = 0;
  int params = 0;
};

struct Code {
  std::vector<MethodCode> methods;
  std::map<MethodId, int> method_index;
  std::vector<std::string> globals;
  std::vector<std::int64_t> initial;
  std::vector<std::string> locks;
  std::vector<std::string> conds;
  std::vector<int> cond_monitor;
  int entry = 0;
};

class Compiler {
 public:
  explicit Compiler(const Program& p) : p_(p) {}

  std::shared_ptr<const Code> run() {
    auto code = std::make_shared<Code>();
    for (const GlobalDecl& g : p_.globals) {
      code->globals.push_back(g.name);
      code->initial.push_back(g.initial);
    }
    for (const LockDecl& l : p_.locks) code->locks.push_back(l.name);
    for (const CondDecl& c : p_.conds) {
      code->conds.push_back(c.name);
      code->cond_monitor.push_back(p_.lock_index(c.monitor));
    }
    int index = 0;
    for (const MethodId& m : p_.method_order) code->method_index[m] = index++;
    code_ = code.get();
    for (const MethodId& m : p_.method_order) {
      const MethodBody& body = p_.method(m);
      MethodCode mc;
      mc.name = m;
      mc.params = static_cast<int>(body.params.size());
      mc.frame_size = static_cast<int>(body.locals.size());
      method_ = &mc;
      for (const Stmt& s : body.statements) stmt(s);
      emit(Op::Return, StatementId{m, 0});
      code->methods.push_back(std::move(mc));
    }
    code->entry = code->method_index.at(p_.entry);
    return code;
  }

 private:
  int here() const { return static_cast<int>(method_->code.size()); }

  Instr& emit(Op op, const StatementId& id, std::int64_t a = 0, int b = 0, int c = 0) {
    method_->code.push_back(Instr{op, a, b, c, {}, id});
    return method_->code.back();
  }

  void expr(const Expr& e, const StatementId& id) {
    switch (e.kind) {
      case ExprKind::IntLiteral:
      case ExprKind::BoolLiteral:
        emit(Op::Push, id, e.value);
        return;
      case ExprKind::Global:
        emit(Op::LoadGlobal, id, p_.global_index(e.name));
        return;
      case ExprKind::Local:
        emit(Op::LoadLocal, id, e.slot);
        return;
      case ExprKind::Unary:
        expr(e.operands[0], id);
        emit(Op::Unary, id).text = e.op;
        return;
      case ExprKind::Binary:
        if (e.op == "&&" || e.op == "||") {
          expr(e.operands[0], id);
          int branch = here();
          emit(e.op == "&&" ? Op::JumpIfFalse : Op::JumpIfTrue, id);
          expr(e.operands[1], id);
          int skip = here();
          emit(Op::Jump, id);
          method_->code[branch].c = here();
          emit(Op::Push, id, e.op == "&&" ? 0 : 1);
          method_->code[skip].c = here();
          return;
        }
        expr(e.operands[0], id);
        expr(e.operands[1], id);
        emit(Op::Binary, id).text = e.op;
        return;
    }
  }

  void block(const std::vector<Stmt>& body) {
    for (const Stmt& s : body) stmt(s);
  }

  void stmt(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::Assign:
        expr(s.expr, s.id);
        if (s.target_is_global) {
          emit(Op::StoreGlobal, s.id, p_.global_index(s.target));
        } else {
          emit(Op::StoreLocal, s.id, s.slot);
        }
        return;
      case StmtKind::If: {
        expr(s.expr, s.id);
        int branch = here();
        emit(Op::JumpIfFalse, s.id);
        block(s.body);
        int skip = here();
        emit(Op::Jump, s.id);
        method_->code[branch].c = here();
        block(s.else_body);
        method_->code[skip].c = here();
        return;
      }
      case StmtKind::BoundedWhile: {
        int counter = method_->frame_size++;
        emit(Op::LoopInit, s.id, counter);
        int head = here();
        emit(Op::LoopCheck, s.id, counter, s.bound);
        expr(s.expr, s.id);
        int exit = here();
        emit(Op::JumpIfFalse, s.id);
        block(s.body);
        emit(Op::Jump, s.id, 0, 0, head);
        method_->code[head].c = here();
        method_->code[exit].c = here();
        return;
      }
      case StmtKind::Lock:
        emit(Op::Acquire, s.id, p_.lock_index(s.target));
        block(s.body);
        emit(Op::Release, s.id, p_.lock_index(s.target));
        return;
      case StmtKind::Wait:
        emit(Op::Wait, s.id, p_.cond_index(s.target));
        return;
      case StmtKind::Notify:
        emit(Op::Notify, s.id, p_.cond_index(s.target));
        return;
      case StmtKind::NotifyAll:
        emit(Op::NotifyAll, s.id, p_.cond_index(s.target));
        return;
      case StmtKind::Spawn:
        for (const Expr& a : s.args) expr(a, s.id);
        emit(Op::Spawn, s.id, code_->method_index.at(s.callee), static_cast<int>(s.args.size()),
             s.slot);
        return;
      case StmtKind::Join:
        emit(Op::Join, s.id, s.slot);
        return;
      case StmtKind::Call:
        for (const Expr& a : s.args) expr(a, s.id);
        emit(Op::Call, s.id, code_->method_index.at(s.callee), static_cast<int>(s.args.size()));
        return;
      case StmtKind::Assert:
        expr(s.expr, s.id);
        emit(Op::Assert, s.id).text = "assert(" + print(s.expr) + ")";
        return;
      case StmtKind::Skip:
        return;
    }
  }

  const Program& p_;
  const Code* code_ = nullptr;
  MethodCode* method_ = nullptr;
};

}  // namespace detail

using detail::Instr;
using detail::Op;

namespace {

std::string thread_name(const std::vector<StatementId>& chain) {
  std::string out = "main";
  for (const StatementId& s : chain) out += "/" + s.str();
  return out;
}

std::string_view visible_kind(Op op) {
  switch (op) {
    case Op::LoadGlobal: return "R";
    case Op::StoreGlobal: return "W";
    case Op::Acquire: return "acquire";
    case Op::Release: return "release";
    case Op::Wait: return "wait";
    case Op::Notify: return "notify";
    case Op::NotifyAll: return "notifyAll";
    case Op::Spawn: return "spawn";
    case Op::Join: return "join";
    default: return "";
  }
}

std::int64_t wrap(std::uint64_t v) { return static_cast<std::int64_t>(v); }

}  // namespace

State::State(const Program& p) : code_(detail::Compiler(p).run()) {
  globals_ = code_->initial;
  locks_.resize(code_->locks.size());
  cond_queues_.resize(code_->conds.size());
  Thread main;
  main.root = code_->entry;
  main.frames.push_back(Frame{code_->entry, 0,
                              std::vector<std::int64_t>(code_->methods[code_->entry].frame_size, 0)});
  threads_.push_back(std::move(main));
  std::vector<TraceEvent> ignored;
  run_local(0, ignored);
}

bool State::enabled(int tid) const {
  const Thread& t = threads_[tid];
  switch (t.status) {
    case ThreadStatus::Done:
    case ThreadStatus::Waiting:
      return false;
    case ThreadStatus::Reacquiring:
      return locks_[code_->cond_monitor[t.wait_cond]].owner == -1;
    case ThreadStatus::Running:
      break;
  }
  const Frame& f = t.frames.back();
  const Instr& in = code_->methods[f.method].code[f.pc];
  if (in.op == Op::Acquire) {
    int owner = locks_[in.a].owner;
    return owner == -1 || owner == tid;
  }
  if (in.op == Op::Join) {
    std::int64_t target = f.locals[in.a];
    if (target <= 0 || target >= static_cast<std::int64_t>(threads_.size())) return true;
    return threads_[target].status == ThreadStatus::Done;
  }
  return true;
}

std::vector<int> State::runnable() const {
  std::vector<int> out;
  if (fault_) return out;
  for (int i = 0; i < static_cast<int>(threads_.size()); ++i) {
    if (enabled(i)) out.push_back(i);
  }
  return out;
}

bool State::finished() const {
  return std::all_of(threads_.begin(), threads_.end(),
                     [](const Thread& t) { return t.status == ThreadStatus::Done; });
}

bool State::deadlocked() const { return !fault_ && !finished() && runnable().empty(); }

void State::fail(int tid, std::string kind, std::string message) {
  const Thread& t = threads_[tid];
  StatementId at;
  if (!t.frames.empty()) {
    const Frame& f = t.frames.back();
    at = code_->methods[f.method].code[f.pc].stmt;
  }
  fault_ = Fault{std::move(kind), tid, at, std::move(message)};
}

std::vector<TraceEvent> State::step(int tid) {
  if (tid < 0 || tid >= static_cast<int>(threads_.size()) || fault_ || !enabled(tid)) {
    throw InvalidSchedule("thread " + std::to_string(tid) + " is not runnable");
  }
  std::vector<TraceEvent> out;
  Thread& t = threads_[tid];
  Frame& f = t.frames.back();
  const Instr& in = code_->methods[f.method].code[f.pc];

  if (t.status == ThreadStatus::Reacquiring) {
    int monitor = code_->cond_monitor[t.wait_cond];
    locks_[monitor] = LockState{tid, t.saved_count};
    t.status = ThreadStatus::Running;
    t.wait_cond = -1;
    t.saved_count = 0;
    out.push_back(TraceEvent{tid, in.stmt, "reacquire", code_->locks[monitor]});
    ++f.pc;
    run_local(tid, out);
    return out;
  }

  std::string kind(visible_kind(in.op));
  switch (in.op) {
    case Op::LoadGlobal:
      t.stack.push_back(globals_[in.a]);
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->globals[in.a]});
      break;
    case Op::StoreGlobal:
      globals_[in.a] = t.stack.back();
      t.stack.pop_back();
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->globals[in.a]});
      break;
    case Op::Acquire: {
      LockState& l = locks_[in.a];
      l.owner = tid;
      ++l.count;
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->locks[in.a]});
      break;
    }
    case Op::Release: {
      LockState& l = locks_[in.a];
      if (--l.count == 0) l.owner = -1;
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->locks[in.a]});
      break;
    }
    case Op::Wait: {
      int monitor = code_->cond_monitor[in.a];
      if (locks_[monitor].owner != tid) {
        fail(tid, "illegal monitor state",
             "wait(" + code_->conds[in.a] + ") without holding " + code_->locks[monitor]);
        return out;
      }
      t.saved_count = locks_[monitor].count;
      locks_[monitor] = LockState{};
      t.status = ThreadStatus::Waiting;
      t.wait_cond = static_cast<int>(in.a);
      cond_queues_[in.a].push_back(tid);
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->conds[in.a]});
      return out;  // pc stays on the wait until woken
    }
    case Op::Notify:
    case Op::NotifyAll: {
      int monitor = code_->cond_monitor[in.a];
      if (locks_[monitor].owner != tid) {
        fail(tid, "illegal monitor state",
             kind + "(" + code_->conds[in.a] + ") without holding " + code_->locks[monitor]);
        return out;
      }
      auto& queue = cond_queues_[in.a];
      std::size_t wake = in.op == Op::Notify ? std::min<std::size_t>(1, queue.size()) : queue.size();
      for (std::size_t k = 0; k < wake; ++k) threads_[queue[k]].status = ThreadStatus::Reacquiring;
      queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(wake));
      out.push_back(TraceEvent{tid, in.stmt, kind, code_->conds[in.a]});
      break;
    }
    case Op::Spawn: {
      const detail::MethodCode& callee = code_->methods[in.a];
      Thread child;
      child.chain = t.chain;
      child.chain.push_back(in.stmt);
      child.root = static_cast<int>(in.a);
      Frame cf{static_cast<int>(in.a), 0, std::vector<std::int64_t>(callee.frame_size, 0)};
      for (int k = in.b - 1; k >= 0; --k) {
        cf.locals[k] = t.stack.back();
        t.stack.pop_back();
      }
      child.frames.push_back(std::move(cf));
      int id = static_cast<int>(threads_.size());
      if (in.c >= 0) f.locals[in.c] = id;
      ++f.pc;
      out.push_back(TraceEvent{tid, in.stmt, kind, callee.name});
      threads_.push_back(std::move(child));
      std::vector<TraceEvent> ignored;
      run_local(id, ignored);
      run_local(tid, out);
      return out;
    }
    case Op::Join: {
      std::int64_t target = f.locals[in.a];
      if (target <= 0 || target >= static_cast<std::int64_t>(threads_.size())) {
        fail(tid, "join", "join of a thread that was never started");
        return out;
      }
      out.push_back(TraceEvent{tid, in.stmt, kind, thread_name(threads_[target].chain)});
      break;
    }
    default:
      throw Error("internal error: step on a local instruction");
  }
  ++threads_[tid].frames.back().pc;
  run_local(tid, out);
  return out;
}

void State::run_local(int tid, std::vector<TraceEvent>&) {
  while (!fault_) {
    Thread& t = threads_[tid];
    if (t.frames.empty()) {
      t.status = ThreadStatus::Done;
      t.stack.clear();
      return;
    }
    Frame& f = t.frames.back();
    const Instr& in = code_->methods[f.method].code[f.pc];
    if (detail::visible(in.op)) return;
    auto pop = [&t] {
      std::int64_t v = t.stack.back();
      t.stack.pop_back();
      return v;
    };
    switch (in.op) {
      case Op::Push:
        t.stack.push_back(in.a);
        break;
      case Op::LoadLocal:
        t.stack.push_back(f.locals[in.a]);
        break;
      case Op::StoreLocal:
        f.locals[in.a] = pop();
        break;
      case Op::Unary: {
        std::int64_t v = pop();
        t.stack.push_back(in.text == "!" ? !v : wrap(0 - static_cast<std::uint64_t>(v)));
        break;
      }
      case Op::Binary: {
        std::int64_t r = pop();
        std::int64_t l = pop();
        auto ul = static_cast<std::uint64_t>(l);
        auto ur = static_cast<std::uint64_t>(r);
        std::int64_t v = 0;
        const std::string& op = in.text;
        if (op == "+") {
          v = wrap(ul + ur);
        } else if (op == "-") {
          v = wrap(ul - ur);
        } else if (op == "*") {
          v = wrap(ul * ur);
        } else if (op == "/" || op == "%") {
          if (r == 0) {
            fail(tid, "division by zero", "division by zero");
            return;
          }
          if (r == -1) {
            v = op == "/" ? wrap(0 - ul) : 0;
          } else {
            v = op == "/" ? l / r : l % r;
          }
        } else if (op == "==") {
          v = l == r;
        } else if (op == "!=") {
          v = l != r;
        } else if (op == "<") {
          v = l < r;
        } else if (op == "<=") {
          v = l <= r;
        } else if (op == ">") {
          v = l > r;
        } else if (op == ">=") {
          v = l >= r;
        }
        t.stack.push_back(v);
        break;
      }
      case Op::Jump:
        f.pc = in.c;
        continue;
      case Op::JumpIfFalse:
        if (!pop()) {
          f.pc = in.c;
          continue;
        }
        break;
      case Op::JumpIfTrue:
        if (pop()) {
          f.pc = in.c;
          continue;
        }
        break;
      case Op::LoopInit:
        f.locals[in.a] = 0;
        break;
      case Op::LoopCheck:
        if (f.locals[in.a] >= in.b) {
          f.pc = in.c;
          continue;
        }
        ++f.locals[in.a];
        break;
      case Op::Call: {
        const detail::MethodCode& callee = code_->methods[in.a];
        Frame cf{static_cast<int>(in.a), 0, std::vector<std::int64_t>(callee.frame_size, 0)};
        for (int k = in.b - 1; k >= 0; --k) cf.locals[k] = pop();
        ++f.pc;
        t.frames.push_back(std::move(cf));
        continue;
      }
      case Op::Return:
        t.frames.pop_back();
        continue;
      case Op::Assert:
        if (!pop()) {
          fail(tid, "assertion", "assertion failed: " + in.text);
          return;
        }
        break;
      default:
        return;
    }
    ++f.pc;
  }
}

std::string State::serialize() const {
  std::string out;
  auto put = [&out](std::int64_t v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
  for (std::int64_t g : globals_) put(g);
  for (const LockState& l : locks_) {
    put(l.owner);
    put(l.count);
  }
  for (const auto& q : cond_queues_) {
    put(static_cast<std::int64_t>(q.size()));
    for (int id : q) put(id);
  }
  put(static_cast<std::int64_t>(threads_.size()));
  for (const Thread& t : threads_) {
    put(static_cast<std::int64_t>(t.status));
    put(t.wait_cond);
    put(t.saved_count);
    put(static_cast<std::int64_t>(t.frames.size()));
    for (const Frame& f : t.frames) {
      put(f.method);
      put(f.pc);
      for (std::int64_t v : f.locals) put(v);
    }
    put(static_cast<std::int64_t>(t.stack.size()));
    for (std::int64_t v : t.stack) put(v);
  }
  return out;
}

ThreadView State::view(int tid) const {
  const Thread& t = threads_.at(tid);
  ThreadView v;
  v.id = tid;
  v.chain = t.chain;
  v.status = t.status;
  if (!t.frames.empty()) {
    const Frame& f = t.frames.back();
    const Instr& in = code_->methods[f.method].code[f.pc];
    v.at = in.stmt;
    v.next_kind = std::string(visible_kind(in.op));
    if (t.status == ThreadStatus::Waiting || t.status == ThreadStatus::Reacquiring) {
      v.next_kind = t.status == ThreadStatus::Waiting ? "wait" : "reacquire";
      v.next_object = t.status == ThreadStatus::Waiting
                          ? code_->conds[t.wait_cond]
                          : code_->locks[code_->cond_monitor[t.wait_cond]];
    } else if (in.op == Op::LoadGlobal || in.op == Op::StoreGlobal) {
      v.next_object = code_->globals[in.a];
    } else if (in.op == Op::Acquire || in.op == Op::Release) {
      v.next_object = code_->locks[in.a];
    } else if (in.op == Op::Notify || in.op == Op::NotifyAll) {
      v.next_object = code_->conds[in.a];
    }
  }
  v.root = code_->methods[t.root].name;
  for (std::size_t l = 0; l < locks_.size(); ++l) {
    if (locks_[l].owner == tid) v.held.push_back(code_->locks[l]);
  }
  return v;
}

std::int64_t State::global(std::string_view name) const {
  for (std::size_t i = 0; i < code_->globals.size(); ++i) {
    if (code_->globals[i] == name) return globals_[i];
  }
  throw Error("unknown global " + std::string(name));
}

namespace {

Verdict verdict_of(const State& s) {
  if (s.fault()) return Verdict::AssertionFailure;
  if (s.deadlocked()) return Verdict::Deadlock;
  return Verdict::NoBugFound;
}

void capture(DetectionResult& r, const State& s) {
  r.verdict = verdict_of(s);
  r.fault = s.fault();
  r.threads.clear();
  for (int i = 0; i < static_cast<int>(s.thread_count()); ++i) r.threads.push_back(s.view(i));
}

}  // namespace

DetectionResult replay(const Program& p, const Schedule& schedule, std::size_t depth_bound) {
  State s(p);
  DetectionResult r;
  for (int tid : schedule) {
    auto events = s.step(tid);
    r.failing_schedule.push_back(tid);
    r.trace.insert(r.trace.end(), events.begin(), events.end());
  }
  while (!s.terminal()) {
    if (r.failing_schedule.size() >= depth_bound) {
      r.partial = true;
      break;
    }
    int tid = s.runnable().front();
    auto events = s.step(tid);
    r.failing_schedule.push_back(tid);
    r.trace.insert(r.trace.end(), events.begin(), events.end());
  }
  capture(r, s);
  if (r.verdict == Verdict::NoBugFound) r.failing_schedule.clear();
  r.stats.schedules = 1;
  r.stats.runs = 1;
  return r;
}

DetectionResult explore(const Program& p, const ExploreOptions& options) {
  struct Node {
    State state;
    std::vector<int> choices;
    std::size_t next = 0;
  };
  DetectionResult result;
  State root(p);
  std::unordered_set<std::string> visited;
  visited.insert(root.serialize());
  result.stats.states = 1;

  auto failure = [&](const Schedule& schedule) {
    DetectionResult r = replay(p, schedule, options.depth_bound);
    r.stats = result.stats;
    r.partial = result.partial;
    return r;
  };

  if (root.terminal()) {
    result.stats.schedules = 1;
    if (verdict_of(root) != Verdict::NoBugFound) return failure({});
    capture(result, root);
    return result;
  }

  std::vector<Node> stack;
  Schedule schedule;
  stack.push_back(Node{root, root.runnable()});
  while (!stack.empty()) {
    Node& top = stack.back();
    if (top.next == top.choices.size()) {
      stack.pop_back();
      if (!schedule.empty()) schedule.pop_back();
      continue;
    }
    int tid = top.choices[top.next++];
    State child = top.state;
    child.step(tid);
    schedule.push_back(tid);
    if (child.terminal()) {
      ++result.stats.schedules;
      if (verdict_of(child) != Verdict::NoBugFound) return failure(schedule);
      schedule.pop_back();
      continue;
    }
    if (schedule.size() >= options.depth_bound) {
      if (options.throw_on_bound) {
        throw BoundExceeded("schedule exceeded " + std::to_string(options.depth_bound) + " steps");
      }
      result.partial = true;
      ++result.stats.schedules;
      schedule.pop_back();
      continue;
    }
    if (!visited.insert(child.serialize()).second) {
      ++result.stats.schedules;
      schedule.pop_back();
      continue;
    }
    ++result.stats.states;
    if (result.stats.states > options.max_states) {
      result.partial = true;
      break;
    }
    std::vector<int> choices = child.runnable();
    stack.push_back(Node{std::move(child), std::move(choices)});
  }
  result.verdict = Verdict::NoBugFound;
  return result;
}

DetectionResult run_random(const Program& p, std::size_t runs, std::uint64_t seed,
                           std::size_t depth_bound) {
  std::mt19937_64 rng(seed);
  DetectionResult result;
  const State initial(p);
  for (std::size_t run = 0; run < runs; ++run) {
    State s = initial;
    Schedule schedule;
    std::vector<TraceEvent> trace;
    bool cut = false;
    while (!s.terminal()) {
      if (schedule.size() >= depth_bound) {
        cut = true;
        break;
      }
      std::vector<int> r = s.runnable();
      std::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
      int tid = r[pick(rng)];
      auto events = s.step(tid);
      schedule.push_back(tid);
      trace.insert(trace.end(), events.begin(), events.end());
    }
    ++result.stats.runs;
    ++result.stats.schedules;
    result.partial = result.partial || cut;
    if (!cut && verdict_of(s) != Verdict::NoBugFound) {
      capture(result, s);
      result.failing_schedule = std::move(schedule);
      result.trace = std::move(trace);
      return result;
    }
  }
  result.verdict = Verdict::NoBugFound;
  return result;
}

std::string DetectionResult::trace_json() const {
  nlohmann::json events = nlohmann::json::array();
  for (const TraceEvent& e : trace) {
    nlohmann::json item{{"thread", e.thread}, {"stmt", e.stmt.str()}, {"kind", e.kind}};
    if (!e.loc.empty()) item["loc"] = e.loc;
    events.push_back(std::move(item));
  }
  nlohmann::json thread_list = nlohmann::json::array();
  for (const ThreadView& t : threads) {
    thread_list.push_back({{"id", t.id}, {"static_id", thread_name(t.chain)}, {"method", t.root}});
  }
  nlohmann::json out{{"verdict", std::string(to_string(verdict))},
                     {"schedule", failing_schedule},
                     {"events", events},
                     {"threads", thread_list},
                     {"partial", partial}};
  if (fault) {
    out["fault"] = {{"kind", fault->kind},
                    {"thread", fault->thread},
                    {"stmt", fault->stmt.str()},
                    {"message", fault->message}};
  }
  return out.dump(2);
}

DetectionResult trace_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed trace: ") + e.what());
  }
  DetectionResult r;
  try {
    std::string verdict = doc.at("verdict").get<std::string>();
    if (verdict == "AssertionFailure") {
      r.verdict = Verdict::AssertionFailure;
    } else if (verdict == "Deadlock") {
      r.verdict = Verdict::Deadlock;
    } else if (verdict == "NoBugFound") {
      r.verdict = Verdict::NoBugFound;
    } else {
      throw Error("unknown verdict '" + verdict + "'");
    }
    if (doc.contains("schedule")) r.failing_schedule = doc["schedule"].get<Schedule>();
    for (const auto& e : doc.at("events")) {
      TraceEvent ev;
      ev.thread = e.at("thread").get<int>();
      ev.stmt = StatementId::parse(e.at("stmt").get<std::string>());
      ev.kind = e.at("kind").get<std::string>();
      if (e.contains("loc")) ev.loc = e["loc"].get<std::string>();
      r.trace.push_back(std::move(ev));
    }
    r.partial = doc.value("partial", false);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed trace: ") + e.what());
  }
  return r;
}

namespace {

std::string where(const Program& p, const StatementId& id) {
  std::string out = id.str();
  if (const Stmt* s = p.find_statement(id)) {
    out += " (line " + std::to_string(s->span.line) + ")";
  }
  return out;
}

std::string describe_thread(const Program& p, const ThreadView& t) {
  std::ostringstream out;
  out << "thread " << t.id << " (" << t.root << ", " << thread_name(t.chain) << "): ";
  switch (t.status) {
    case ThreadStatus::Done:
      out << "finished";
      break;
    case ThreadStatus::Waiting:
      out << "waiting on " << t.next_object << " at " << where(p, *t.at);
      break;
    case ThreadStatus::Reacquiring:
      out << "woken, blocked reacquiring " << t.next_object << " at " << where(p, *t.at);
      break;
    case ThreadStatus::Running:
      if (t.next_kind == "acquire") {
        out << "blocked acquiring " << t.next_object << " at " << where(p, *t.at);
      } else if (t.next_kind == "join") {
        out << "blocked in join at " << where(p, *t.at);
      } else {
        out << "runnable at " << where(p, *t.at);
      }
      break;
  }
  if (!t.held.empty() && t.status != ThreadStatus::Done) {
    out << ", holding";
    for (const auto& l : t.held) out << ' ' << l;
  }
  return out.str();
}

}  // namespace

BugReport make_bug_report(const Program& p, const DetectionResult& r) {
  BugReport b;
  b.verdict = r.verdict;
  b.result = r;
  for (const ThreadView& t : r.threads) b.contexts.push_back(describe_thread(p, t));
  if (r.verdict == Verdict::AssertionFailure && r.fault) {
    const Fault& f = *r.fault;
    b.symptom = f.message + " at " + where(p, f.stmt) + " in thread " + std::to_string(f.thread);
    if (const Stmt* s = p.find_statement(f.stmt)) {
      b.symptom += ", column " + std::to_string(s->span.column);
    }
  } else if (r.verdict == Verdict::Deadlock) {
    b.symptom = "deadlock: no thread can make progress";
    for (const ThreadView& t : r.threads) {
      if (t.status != ThreadStatus::Done) b.symptom += "; " + describe_thread(p, t);
    }
  } else {
    b.symptom = "no bug found";
  }
  return b;
}

std::string BugReport::text() const {
  std::ostringstream out;
  out << "Verdict: " << to_string(verdict) << '\n';
  out << "Symptom: " << symptom << '\n';
  if (!contexts.empty()) {
    out << "Threads:\n";
    for (const auto& c : contexts) out << "  " << c << '\n';
  }
  if (!result.failing_schedule.empty()) {
    out << "Failing schedule:";
    for (int t : result.failing_schedule) out << ' ' << t;
    out << '\n';
  }
  if (!result.trace.empty()) {
    out << "Trace:\n";
    for (const TraceEvent& e : result.trace) {
      out << "  " << e.thread << ' ' << e.stmt.str() << ' ' << e.kind;
      if (!e.loc.empty()) out << '(' << e.loc << ')';
      out << '\n';
    }
  }
  return out.str();
}

std::string BugReport::to_json() const {
  nlohmann::json out{{"verdict", std::string(to_string(verdict))},
                     {"symptom", symptom},
                     {"threads", contexts},
                     {"trace", nlohmann::json::parse(result.trace_json())}};
  return out.dump(2);
}

}  // namespace confx
