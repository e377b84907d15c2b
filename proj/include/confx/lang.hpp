// MiniConc: lexer, parser, IR and printer.
//
// MiniConc is a small shared-memory language with reentrant monitors,
// condition variables, thread spawn/join and assertions. Every loop carries a
// static iteration bound so that the explorer terminates.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace confx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An error tied to a position in MiniConc source text.
class SourceError : public Error {
 public:
  SourceError(const std::string& what, int line, int column)
      : Error(what), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

class LexError : public SourceError {
  using SourceError::SourceError;
};
class UnterminatedComment : public SourceError {
  using SourceError::SourceError;
};
class SyntaxError : public SourceError {
 public:
  SyntaxError(const std::string& expected, int line, int column);
  const std::string& expected() const { return expected_; }

 private:
  std::string expected_;
};
class UnboundedLoopError : public SourceError {
  using SourceError::SourceError;
};

struct SourceSpan {
  std::size_t begin = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
  int line = 1;
  int column = 1;
};

// ---------------------------------------------------------------------------
// Tokens

enum class TokenKind { Keyword, Identifier, Literal, Operator, Punctuation, Comment };

struct Token {
  TokenKind kind;
  std::string lexeme;
  SourceSpan span;
};

/// Splits `text` into tokens, comments included. Whitespace is not a token;
/// the gaps between consecutive token spans are whitespace only.
std::vector<Token> lex(std::string_view text);

struct TokenCounts {
  std::size_t tokens = 0;    // non-comment tokens
  std::size_t comments = 0;  // comment tokens
};

TokenCounts lex_counts(std::string_view text);

/// Number of non-comment tokens in `text`.
std::size_t count_tokens(std::string_view text);

/// Removes `//` and `/* */` comments. A block comment that sits between two
/// non-whitespace characters is replaced by a single space so that the
/// neighbouring tokens stay separate.
std::string strip_comments(std::string_view text);

// ---------------------------------------------------------------------------
// IR

using MethodId = std::string;

struct StatementId {
  MethodId method;
  int ordinal = 0;  // pre-order position inside the method, 1-based

  std::string str() const;
  static StatementId parse(std::string_view text);
  auto operator<=>(const StatementId&) const = default;
};

enum class ValueType { Int, Bool };

enum class ExprKind { IntLiteral, BoolLiteral, Global, Local, Unary, Binary };

struct Expr {
  ExprKind kind = ExprKind::IntLiteral;
  std::int64_t value = 0;  // literals
  std::string name;        // variables
  int slot = -1;           // locals
  std::string op;          // unary / binary operator
  std::vector<Expr> operands;
  ValueType type = ValueType::Int;
  SourceSpan span;
};

enum class StmtKind {
  Assign,
  If,
  BoundedWhile,
  Lock,
  Wait,
  Notify,
  NotifyAll,
  Spawn,
  Join,
  Call,
  Assert,
  Skip,
};

std::string_view to_string(StmtKind kind);

struct Stmt {
  StmtKind kind = StmtKind::Skip;
  StatementId id;
  SourceSpan span;

  // Assign: variable; Lock: lock; Wait/Notify*: condition; Spawn/Join: thread
  // handle (empty for an anonymous spawn).
  std::string target;
  bool target_is_global = false;
  bool declares_local = false;  // `var x = ...;`
  int slot = -1;                // local slot of target, when local

  MethodId callee;         // Call / Spawn
  std::vector<Expr> args;  // Call / Spawn
  Expr expr;               // Assign rhs, If / BoundedWhile condition, Assert
  int bound = 0;           // BoundedWhile iteration cap

  std::vector<Stmt> body;       // If-then, BoundedWhile, Lock
  std::vector<Stmt> else_body;  // If-else
};

struct GlobalDecl {
  std::string name;
  ValueType type = ValueType::Int;
  std::int64_t initial = 0;
  SourceSpan span;
};

struct LockDecl {
  std::string name;
  SourceSpan span;
};

struct CondDecl {
  std::string name;
  std::string monitor;  // lock that must be held to wait / notify
  SourceSpan span;
};

enum class LocalKind { Int, Bool, Thread };

struct MethodBody {
  MethodId name;
  std::vector<std::string> params;
  std::vector<Stmt> statements;
  std::vector<std::string> locals;  // slot -> name; params occupy the first slots
  std::vector<LocalKind> local_kinds;
  SourceSpan span;       // whole declaration
  SourceSpan body_span;  // from `{` to `}` inclusive
  int statement_count = 0;
};

struct Program {
  std::vector<GlobalDecl> globals;
  std::vector<LockDecl> locks;
  std::vector<CondDecl> conds;
  std::map<MethodId, MethodBody> methods;
  std::vector<MethodId> method_order;  // declaration order
  MethodId entry = "main";
  std::string source_text;

  const GlobalDecl* find_global(std::string_view name) const;
  const CondDecl* find_cond(std::string_view name) const;
  bool has_lock(std::string_view name) const;
  int global_index(std::string_view name) const;
  int lock_index(std::string_view name) const;
  int cond_index(std::string_view name) const;
  const MethodBody& method(const MethodId& id) const;
  /// Statement with the given id, or nullptr.
  const Stmt* find_statement(const StatementId& id) const;
};

/// Parses MiniConc source. Throws LexError, UnterminatedComment, SyntaxError
/// or UnboundedLoopError with the position of the offending construct.
Program parse(std::string_view text);

/// Canonical source for `program`; parsing the result yields a structurally
/// equal program.
std::string print(const Program& program);
std::string print(const Expr& expr);

/// Structural equality, ignoring spans and source text.
bool structurally_equal(const Program& a, const Program& b);

/// Pre-order visit of every statement in `stmts`, descending into bodies.
template <typename F>
void for_each_stmt(const std::vector<Stmt>& stmts, F&& fn) {
  for (const Stmt& s : stmts) {
    fn(s);
    for_each_stmt(s.body, fn);
    for_each_stmt(s.else_body, fn);
  }
}

/// Number of Lock statements in the program.
std::size_t count_lock_blocks(const Program& program);

}  // namespace confx
