#include "confx/lang.hpp"

#include <charconv>
#include <functional>
#include <set>
#include <unordered_map>

namespace confx {

SyntaxError::SyntaxError(const std::string& expected, int line, int column)
    : SourceError(std::to_string(line) + ":" + std::to_string(column) + ": " + expected, line,
                  column),
      expected_(expected) {}

std::string StatementId::str() const { return method + "#" + std::to_string(ordinal); }

StatementId StatementId::parse(std::string_view text) {
  auto hash = text.rfind('#');
  if (hash == std::string_view::npos) throw Error("malformed statement id: " + std::string(text));
  StatementId id;
  id.method = std::string(text.substr(0, hash));
  auto digits = text.substr(hash + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id.ordinal);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw Error("malformed statement id: " + std::string(text));
  }
  return id;
}

std::string_view to_string(StmtKind kind) {
  switch (kind) {
    case StmtKind::Assign: return "assign";
    case StmtKind::If: return "if";
    case StmtKind::BoundedWhile: return "while";
    case StmtKind::Lock: return "lock";
    case StmtKind::Wait: return "wait";
    case StmtKind::Notify: return "notify";
    case StmtKind::NotifyAll: return "notifyAll";
    case StmtKind::Spawn: return "spawn";
    case StmtKind::Join: return "join";
    case StmtKind::Call: return "call";
    case StmtKind::Assert: return "assert";
    case StmtKind::Skip: return "skip";
  }
  return "?";
}

const GlobalDecl* Program::find_global(std::string_view name) const {
  for (const auto& g : globals) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

const CondDecl* Program::find_cond(std::string_view name) const {
  for (const auto& c : conds) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool Program::has_lock(std::string_view name) const { return lock_index(name) >= 0; }

int Program::global_index(std::string_view name) const {
  for (std::size_t i = 0; i < globals.size(); ++i) {
    if (globals[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int Program::lock_index(std::string_view name) const {
  for (std::size_t i = 0; i < locks.size(); ++i) {
    if (locks[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int Program::cond_index(std::string_view name) const {
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (conds[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

const MethodBody& Program::method(const MethodId& id) const {
  auto it = methods.find(id);
  if (it == methods.end()) throw Error("unknown method: " + id);
  return it->second;
}

const Stmt* Program::find_statement(const StatementId& id) const {
  auto it = methods.find(id.method);
  if (it == methods.end()) return nullptr;
  const Stmt* found = nullptr;
  for_each_stmt(it->second.statements, [&](const Stmt& s) {
    if (s.id.ordinal == id.ordinal) found = &s;
  });
  return found;
}

std::size_t count_lock_blocks(const Program& program) {
  std::size_t n = 0;
  for (const auto& [name, m] : program.methods) {
    for_each_stmt(m.statements, [&](const Stmt& s) {
      if (s.kind == StmtKind::Lock) ++n;
    });
  }
  return n;
}

namespace {

// ---------------------------------------------------------------------------
// Syntax

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {
    for (Token& t : lex(text)) {
      if (t.kind != TokenKind::Comment) tokens_.push_back(std::move(t));
    }
    SourceSpan eof{text.size(), text.size(), 1, 1};
    if (!tokens_.empty()) {
      eof.line = tokens_.back().span.line;
      eof.column = tokens_.back().span.column + static_cast<int>(tokens_.back().lexeme.size());
    }
    tokens_.push_back(Token{TokenKind::Punctuation, "", eof});
  }

  Program run() {
    Program program;
    program.source_text = std::string(text_);
    std::set<std::string> names;
    auto claim = [&](const std::string& name, const Token& at) {
      if (!names.insert(name).second) {
        throw SyntaxError("duplicate declaration of '" + name + "'", at.span.line, at.span.column);
      }
    };
    while (!at_end()) {
      const Token& start = peek();
      if (accept_keyword("shared")) {
        GlobalDecl g;
        g.span = start.span;
        if (accept_keyword("int")) {
          g.type = ValueType::Int;
        } else if (accept_keyword("bool")) {
          g.type = ValueType::Bool;
        } else {
          fail("'int' or 'bool'");
        }
        const Token& name = expect_identifier();
        g.name = name.lexeme;
        claim(g.name, name);
        expect("=");
        g.initial = parse_literal(g.type);
        g.span.end = expect(";").span.end;
        program.globals.push_back(std::move(g));
      } else if (accept_keyword("lock")) {
        const Token& name = expect_identifier();
        claim(name.lexeme, name);
        SourceSpan span = start.span;
        span.end = expect(";").span.end;
        program.locks.push_back(LockDecl{name.lexeme, span});
      } else if (accept_keyword("cond")) {
        const Token& name = expect_identifier();
        claim(name.lexeme, name);
        expect_keyword("on");
        const Token& monitor = expect_identifier();
        SourceSpan span = start.span;
        span.end = expect(";").span.end;
        program.conds.push_back(CondDecl{name.lexeme, monitor.lexeme, span});
        cond_positions_.push_back(monitor.span);
      } else if (peek().kind == TokenKind::Identifier) {
        MethodBody m;
        const Token& name = expect_identifier();
        m.name = name.lexeme;
        claim(m.name, name);
        m.span = start.span;
        expect("(");
        if (!check(")")) {
          do {
            m.params.push_back(expect_identifier().lexeme);
          } while (accept(","));
        }
        expect(")");
        m.body_span = peek().span;
        m.statements = parse_block(m.body_span.end);
        m.span.end = m.body_span.end;
        program.method_order.push_back(m.name);
        program.methods.emplace(m.name, std::move(m));
      } else {
        fail("declaration");
      }
    }
    return program;
  }

  const std::vector<SourceSpan>& cond_positions() const { return cond_positions_; }

 private:
  bool at_end() const { return pos_ + 1 >= tokens_.size(); }
  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  const Token& next() {
    const Token& t = tokens_[pos_];
    if (!at_end()) ++pos_;
    return t;
  }
  bool check(std::string_view lexeme) const {
    const Token& t = peek();
    return !at_end() && t.lexeme == lexeme &&
           (t.kind == TokenKind::Punctuation || t.kind == TokenKind::Operator);
  }
  bool check_keyword(std::string_view kw) const {
    return peek().kind == TokenKind::Keyword && peek().lexeme == kw;
  }
  bool accept(std::string_view lexeme) {
    if (!check(lexeme)) return false;
    next();
    return true;
  }
  bool accept_keyword(std::string_view kw) {
    if (!check_keyword(kw)) return false;
    next();
    return true;
  }
  [[noreturn]] void fail(const std::string& expected) const {
    const Token& t = peek();
    std::string found = at_end() ? "end of input" : "'" + t.lexeme + "'";
    throw SyntaxError("expected " + expected + ", found " + found, t.span.line, t.span.column);
  }
  const Token& expect(std::string_view lexeme) {
    if (!check(lexeme)) fail("'" + std::string(lexeme) + "'");
    return next();
  }
  const Token& expect_keyword(std::string_view kw) {
    if (!check_keyword(kw)) fail("'" + std::string(kw) + "'");
    return next();
  }
  const Token& expect_identifier() {
    if (peek().kind != TokenKind::Identifier) fail("identifier");
    return next();
  }

  std::int64_t parse_int_token() {
    if (peek().kind != TokenKind::Literal) fail("integer literal");
    const Token& t = next();
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.lexeme.data(), t.lexeme.data() + t.lexeme.size(), v);
    if (ec != std::errc()) throw SyntaxError("integer literal in range", t.span.line, t.span.column);
    return v;
  }

  std::int64_t parse_literal(ValueType type) {
    if (type == ValueType::Bool) {
      if (accept_keyword("true")) return 1;
      if (accept_keyword("false")) return 0;
      fail("'true' or 'false'");
    }
    bool negative = accept("-");
    std::int64_t v = parse_int_token();
    return negative ? -v : v;
  }

  std::vector<Stmt> parse_block(std::size_t& end) {
    expect("{");
    std::vector<Stmt> out;
    while (!check("}")) {
      if (at_end()) fail("'}'");
      out.push_back(parse_statement());
    }
    end = next().span.end;
    return out;
  }

  Stmt parse_statement() {
    const Token& start = peek();
    Stmt s;
    s.span = start.span;
    auto finish = [&](std::size_t end) { s.span.end = end; };

    if (accept_keyword("var")) {
      s.kind = StmtKind::Assign;
      s.declares_local = true;
      s.target = expect_identifier().lexeme;
      expect("=");
      s.expr = parse_expr();
      finish(expect(";").span.end);
    } else if (accept_keyword("if")) {
      s.kind = StmtKind::If;
      expect("(");
      s.expr = parse_expr();
      expect(")");
      std::size_t end = 0;
      s.body = parse_block(end);
      if (accept_keyword("else")) {
        if (check_keyword("if")) {
          s.else_body.push_back(parse_statement());
          end = s.else_body.back().span.end;
        } else {
          s.else_body = parse_block(end);
        }
      }
      finish(end);
    } else if (accept_keyword("while")) {
      s.kind = StmtKind::BoundedWhile;
      expect("(");
      s.expr = parse_expr();
      expect(")");
      if (!check_keyword("bound")) {
        throw UnboundedLoopError(std::to_string(start.span.line) + ":" +
                                     std::to_string(start.span.column) +
                                     ": while loop lacks a 'bound N' annotation",
                                 start.span.line, start.span.column);
      }
      next();
      s.bound = static_cast<int>(parse_int_token());
      std::size_t end = 0;
      s.body = parse_block(end);
      finish(end);
    } else if (accept_keyword("lock")) {
      s.kind = StmtKind::Lock;
      expect("(");
      s.target = expect_identifier().lexeme;
      expect(")");
      std::size_t end = 0;
      s.body = parse_block(end);
      finish(end);
    } else if (check_keyword("wait") || check_keyword("notify") || check_keyword("notifyAll")) {
      const Token& kw = next();
      s.kind = kw.lexeme == "wait"     ? StmtKind::Wait
               : kw.lexeme == "notify" ? StmtKind::Notify
                                       : StmtKind::NotifyAll;
      expect("(");
      s.target = expect_identifier().lexeme;
      expect(")");
      finish(expect(";").span.end);
    } else if (accept_keyword("spawn")) {
      s.kind = StmtKind::Spawn;
      if (peek(1).lexeme == "=" && peek(1).kind == TokenKind::Operator) {
        s.target = expect_identifier().lexeme;
        expect("=");
      }
      s.callee = expect_identifier().lexeme;
      s.args = parse_args();
      finish(expect(";").span.end);
    } else if (accept_keyword("join")) {
      s.kind = StmtKind::Join;
      s.target = expect_identifier().lexeme;
      finish(expect(";").span.end);
    } else if (accept_keyword("assert")) {
      s.kind = StmtKind::Assert;
      expect("(");
      s.expr = parse_expr();
      expect(")");
      finish(expect(";").span.end);
    } else if (accept_keyword("skip")) {
      s.kind = StmtKind::Skip;
      finish(expect(";").span.end);
    } else if (peek().kind == TokenKind::Identifier) {
      const Token& name = next();
      if (check("(")) {
        s.kind = StmtKind::Call;
        s.callee = name.lexeme;
        s.args = parse_args();
      } else {
        s.kind = StmtKind::Assign;
        s.target = name.lexeme;
        expect("=");
        s.expr = parse_expr();
      }
      finish(expect(";").span.end);
    } else {
      fail("statement");
    }
    return s;
  }

  std::vector<Expr> parse_args() {
    std::vector<Expr> args;
    expect("(");
    if (!check(")")) {
      do {
        args.push_back(parse_expr());
      } while (accept(","));
    }
    expect(")");
    return args;
  }

  static int precedence(std::string_view op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "==" || op == "!=") return 3;
    if (op == "<" || op == "<=" || op == ">" || op == ">=") return 4;
    if (op == "+" || op == "-") return 5;
    if (op == "*" || op == "/" || op == "%") return 6;
    return 0;
  }

  Expr parse_expr(int min_prec = 1) {
    Expr lhs = parse_unary();
    for (;;) {
      const Token& t = peek();
      if (t.kind != TokenKind::Operator) break;
      int prec = precedence(t.lexeme);
      if (prec < min_prec || prec == 0) break;
      std::string op = next().lexeme;
      Expr rhs = parse_expr(prec + 1);
      Expr bin;
      bin.kind = ExprKind::Binary;
      bin.op = op;
      bin.span = lhs.span;
      bin.span.end = rhs.span.end;
      bin.operands.push_back(std::move(lhs));
      bin.operands.push_back(std::move(rhs));
      lhs = std::move(bin);
    }
    return lhs;
  }

  Expr parse_unary() {
    const Token& t = peek();
    if (t.kind == TokenKind::Operator && (t.lexeme == "-" || t.lexeme == "!")) {
      Expr e;
      e.kind = ExprKind::Unary;
      e.op = next().lexeme;
      e.span = t.span;
      e.operands.push_back(parse_unary());
      e.span.end = e.operands.back().span.end;
      return e;
    }
    return parse_primary();
  }

  Expr parse_primary() {
    const Token& t = peek();
    Expr e;
    e.span = t.span;
    if (t.kind == TokenKind::Literal) {
      e.kind = ExprKind::IntLiteral;
      e.value = parse_int_token();
    } else if (accept_keyword("true")) {
      e.kind = ExprKind::BoolLiteral;
      e.value = 1;
    } else if (accept_keyword("false")) {
      e.kind = ExprKind::BoolLiteral;
      e.value = 0;
    } else if (t.kind == TokenKind::Identifier) {
      e.kind = ExprKind::Global;  // resolved later
      e.name = next().lexeme;
    } else if (accept("(")) {
      e = parse_expr();
      expect(")");
    } else {
      fail("expression");
    }
    return e;
  }

  std::string_view text_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::vector<SourceSpan> cond_positions_;
};

// ---------------------------------------------------------------------------
// Name resolution and typing

[[noreturn]] void semantic_error(const std::string& msg, const SourceSpan& at) {
  throw SyntaxError(msg, at.line, at.column);
}

class Resolver {
 public:
  explicit Resolver(Program& p) : p_(p) {}

  void run(const std::vector<SourceSpan>& cond_positions) {
    for (std::size_t i = 0; i < p_.conds.size(); ++i) {
      if (!p_.has_lock(p_.conds[i].monitor)) {
        semantic_error("condition '" + p_.conds[i].name + "' names undeclared lock '" +
                           p_.conds[i].monitor + "'",
                       cond_positions[i]);
      }
    }
    auto main_it = p_.methods.find(p_.entry);
    if (main_it == p_.methods.end()) {
      semantic_error("program has no 'main' method", SourceSpan{0, 0, 1, 1});
    }
    if (!main_it->second.params.empty()) {
      semantic_error("'main' takes no parameters", main_it->second.span);
    }
    for (auto& [name, m] : p_.methods) resolve_method(m);
  }

 private:
  struct Local {
    int slot;
    LocalKind kind;
  };

  void resolve_method(MethodBody& m) {
    method_ = &m;
    ordinal_ = 0;
    scopes_.clear();
    scopes_.emplace_back();
    m.locals.clear();
    m.local_kinds.clear();
    for (const std::string& param : m.params) declare(param, LocalKind::Int, m.span);
    resolve_block(m.statements);
    m.statement_count = ordinal_;
  }

  int declare(const std::string& name, LocalKind kind, const SourceSpan& at) {
    if (p_.find_global(name) || p_.has_lock(name) || p_.find_cond(name) || p_.methods.count(name)) {
      semantic_error("local '" + name + "' shadows a global declaration", at);
    }
    if (scopes_.back().count(name)) semantic_error("duplicate local '" + name + "'", at);
    int slot = static_cast<int>(method_->locals.size());
    method_->locals.push_back(name);
    method_->local_kinds.push_back(kind);
    scopes_.back()[name] = Local{slot, kind};
    return slot;
  }

  const Local* lookup(const std::string& name) const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      auto found = it->find(name);
      if (found != it->end()) return &found->second;
    }
    return nullptr;
  }

  void resolve_block(std::vector<Stmt>& stmts) {
    scopes_.emplace_back();
    for (Stmt& s : stmts) resolve_stmt(s);
    scopes_.pop_back();
  }

  void expect_type(const Expr& e, ValueType want, const char* what) {
    if (e.type != want) {
      semantic_error(std::string(what) + " must be " + (want == ValueType::Bool ? "bool" : "int"),
                     e.span);
    }
  }

  void resolve_call(Stmt& s) {
    auto it = p_.methods.find(s.callee);
    if (it == p_.methods.end()) semantic_error("unknown method '" + s.callee + "'", s.span);
    if (it->second.params.size() != s.args.size()) {
      semantic_error("method '" + s.callee + "' expects " +
                         std::to_string(it->second.params.size()) + " argument(s)",
                     s.span);
    }
    for (Expr& a : s.args) {
      resolve_expr(a);
      expect_type(a, ValueType::Int, "argument");
    }
  }

  void resolve_stmt(Stmt& s) {
    s.id = StatementId{method_->name, ++ordinal_};
    switch (s.kind) {
      case StmtKind::Assign: {
        resolve_expr(s.expr);
        if (s.declares_local) {
          LocalKind kind = s.expr.type == ValueType::Bool ? LocalKind::Bool : LocalKind::Int;
          s.slot = declare(s.target, kind, s.span);
          break;
        }
        if (const Local* local = lookup(s.target)) {
          if (local->kind == LocalKind::Thread) {
            semantic_error("cannot assign to thread handle '" + s.target + "'", s.span);
          }
          s.slot = local->slot;
          ValueType t = local->kind == LocalKind::Bool ? ValueType::Bool : ValueType::Int;
          expect_type(s.expr, t, "assigned value");
        } else if (const GlobalDecl* g = p_.find_global(s.target)) {
          s.target_is_global = true;
          expect_type(s.expr, g->type, "assigned value");
        } else {
          semantic_error("assignment to undeclared identifier '" + s.target + "'", s.span);
        }
        break;
      }
      case StmtKind::If:
        resolve_expr(s.expr);
        expect_type(s.expr, ValueType::Bool, "if condition");
        resolve_block(s.body);
        resolve_block(s.else_body);
        break;
      case StmtKind::BoundedWhile:
        resolve_expr(s.expr);
        expect_type(s.expr, ValueType::Bool, "while condition");
        if (s.bound < 0) semantic_error("loop bound must be non-negative", s.span);
        resolve_block(s.body);
        break;
      case StmtKind::Lock:
        if (!p_.has_lock(s.target)) semantic_error("undeclared lock '" + s.target + "'", s.span);
        resolve_block(s.body);
        break;
      case StmtKind::Wait:
      case StmtKind::Notify:
      case StmtKind::NotifyAll:
        if (!p_.find_cond(s.target)) {
          semantic_error("undeclared condition variable '" + s.target + "'", s.span);
        }
        break;
      case StmtKind::Spawn:
        resolve_call(s);
        if (!s.target.empty()) {
          if (const Local* local = lookup(s.target)) {
            if (local->kind != LocalKind::Thread) {
              semantic_error("'" + s.target + "' is not a thread handle", s.span);
            }
            s.slot = local->slot;
          } else {
            s.slot = declare(s.target, LocalKind::Thread, s.span);
            s.declares_local = true;
          }
        }
        break;
      case StmtKind::Join: {
        const Local* local = lookup(s.target);
        if (!local || local->kind != LocalKind::Thread) {
          semantic_error("join of undeclared thread handle '" + s.target + "'", s.span);
        }
        s.slot = local->slot;
        break;
      }
      case StmtKind::Call:
        resolve_call(s);
        break;
      case StmtKind::Assert:
        resolve_expr(s.expr);
        expect_type(s.expr, ValueType::Bool, "assertion");
        break;
      case StmtKind::Skip:
        break;
    }
  }

  void resolve_expr(Expr& e) {
    switch (e.kind) {
      case ExprKind::IntLiteral:
        e.type = ValueType::Int;
        return;
      case ExprKind::BoolLiteral:
        e.type = ValueType::Bool;
        return;
      case ExprKind::Global:
      case ExprKind::Local:
        if (const Local* local = lookup(e.name)) {
          if (local->kind == LocalKind::Thread) {
            semantic_error("thread handle '" + e.name + "' used in an expression", e.span);
          }
          e.kind = ExprKind::Local;
          e.slot = local->slot;
          e.type = local->kind == LocalKind::Bool ? ValueType::Bool : ValueType::Int;
        } else if (const GlobalDecl* g = p_.find_global(e.name)) {
          e.kind = ExprKind::Global;
          e.type = g->type;
        } else {
          semantic_error("undeclared identifier '" + e.name + "'", e.span);
        }
        return;
      case ExprKind::Unary:
        resolve_expr(e.operands[0]);
        if (e.op == "!") {
          expect_type(e.operands[0], ValueType::Bool, "operand of '!'");
          e.type = ValueType::Bool;
        } else {
          expect_type(e.operands[0], ValueType::Int, "operand of '-'");
          e.type = ValueType::Int;
        }
        return;
      case ExprKind::Binary: {
        resolve_expr(e.operands[0]);
        resolve_expr(e.operands[1]);
        const std::string& op = e.op;
        if (op == "&&" || op == "||") {
          expect_type(e.operands[0], ValueType::Bool, "logical operand");
          expect_type(e.operands[1], ValueType::Bool, "logical operand");
          e.type = ValueType::Bool;
        } else if (op == "==" || op == "!=") {
          if (e.operands[0].type != e.operands[1].type) {
            semantic_error("operands of '" + op + "' have different types", e.span);
          }
          e.type = ValueType::Bool;
        } else if (op == "<" || op == "<=" || op == ">" || op == ">=") {
          expect_type(e.operands[0], ValueType::Int, "comparison operand");
          expect_type(e.operands[1], ValueType::Int, "comparison operand");
          e.type = ValueType::Bool;
        } else {
          expect_type(e.operands[0], ValueType::Int, "arithmetic operand");
          expect_type(e.operands[1], ValueType::Int, "arithmetic operand");
          e.type = ValueType::Int;
        }
        return;
      }
    }
  }

  Program& p_;
  MethodBody* method_ = nullptr;
  int ordinal_ = 0;
  std::vector<std::unordered_map<std::string, Local>> scopes_;
};

}  // namespace

Program parse(std::string_view text) {
  Parser parser(text);
  Program program = parser.run();
  Resolver(program).run(parser.cond_positions());
  return program;
}

}  // namespace confx
