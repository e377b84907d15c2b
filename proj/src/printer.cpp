#include "confx/lang.hpp"

#include <sstream>

namespace confx {

namespace {

int precedence(const std::string& op) {
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "==" || op == "!=") return 3;
  if (op == "<" || op == "<=" || op == ">" || op == ">=") return 4;
  if (op == "+" || op == "-") return 5;
  return 6;
}

void print_expr(std::ostream& out, const Expr& e, int context) {
  switch (e.kind) {
    case ExprKind::IntLiteral:
      out << e.value;
      return;
    case ExprKind::BoolLiteral:
      out << (e.value ? "true" : "false");
      return;
    case ExprKind::Global:
    case ExprKind::Local:
      out << e.name;
      return;
    case ExprKind::Unary:
      out << e.op;
      print_expr(out, e.operands[0], 7);
      return;
    case ExprKind::Binary: {
      int prec = precedence(e.op);
      bool parens = prec < context;
      if (parens) out << '(';
      print_expr(out, e.operands[0], prec);
      out << ' ' << e.op << ' ';
      // operators are left-associative: a tighter bound on the right side
      print_expr(out, e.operands[1], prec + 1);
      if (parens) out << ')';
      return;
    }
  }
}

void print_args(std::ostream& out, const std::vector<Expr>& args) {
  out << '(';
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i) out << ", ";
    print_expr(out, args[i], 0);
  }
  out << ')';
}

void print_block(std::ostream& out, const std::vector<Stmt>& body, int indent);

void print_stmt(std::ostream& out, const Stmt& s, int indent) {
  std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
  out << pad;
  switch (s.kind) {
    case StmtKind::Assign:
      if (s.declares_local) out << "var ";
      out << s.target << " = ";
      print_expr(out, s.expr, 0);
      out << ";\n";
      return;
    case StmtKind::If: {
      const Stmt* cur = &s;
      for (;;) {
        out << "if (";
        print_expr(out, cur->expr, 0);
        out << ") ";
        print_block(out, cur->body, indent);
        if (cur->else_body.empty()) break;
        if (cur->else_body.size() == 1 && cur->else_body[0].kind == StmtKind::If) {
          out << " else ";
          cur = &cur->else_body[0];
          continue;
        }
        out << " else ";
        print_block(out, cur->else_body, indent);
        break;
      }
      out << '\n';
      return;
    }
    case StmtKind::BoundedWhile:
      out << "while (";
      print_expr(out, s.expr, 0);
      out << ") bound " << s.bound << ' ';
      print_block(out, s.body, indent);
      out << '\n';
      return;
    case StmtKind::Lock:
      out << "lock (" << s.target << ") ";
      print_block(out, s.body, indent);
      out << '\n';
      return;
    case StmtKind::Wait:
    case StmtKind::Notify:
    case StmtKind::NotifyAll:
      out << to_string(s.kind) << '(' << s.target << ");\n";
      return;
    case StmtKind::Spawn:
      out << "spawn ";
      if (!s.target.empty()) out << s.target << " = ";
      out << s.callee;
      print_args(out, s.args);
      out << ";\n";
      return;
    case StmtKind::Join:
      out << "join " << s.target << ";\n";
      return;
    case StmtKind::Call:
      out << s.callee;
      print_args(out, s.args);
      out << ";\n";
      return;
    case StmtKind::Assert:
      out << "assert(";
      print_expr(out, s.expr, 0);
      out << ");\n";
      return;
    case StmtKind::Skip:
      out << "skip;\n";
      return;
  }
}

void print_block(std::ostream& out, const std::vector<Stmt>& body, int indent) {
  out << "{\n";
  for (const Stmt& s : body) print_stmt(out, s, indent + 1);
  out << std::string(static_cast<std::size_t>(indent) * 4, ' ') << '}';
}

bool equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.value != b.value || a.name != b.name || a.op != b.op ||
      a.operands.size() != b.operands.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.operands.size(); ++i) {
    if (!equal(a.operands[i], b.operands[i])) return false;
  }
  return true;
}

bool equal(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!equal(a[i], b[i])) return false;
  }
  return true;
}

bool equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b);

bool equal(const Stmt& a, const Stmt& b) {
  return a.kind == b.kind && a.id == b.id && a.target == b.target &&
         a.declares_local == b.declares_local && a.callee == b.callee && equal(a.args, b.args) &&
         equal(a.expr, b.expr) && a.bound == b.bound && equal(a.body, b.body) &&
         equal(a.else_body, b.else_body);
}

bool equal(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!equal(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

std::string print(const Expr& expr) {
  std::ostringstream out;
  print_expr(out, expr, 0);
  return out.str();
}

std::string print(const Program& program) {
  std::ostringstream out;
  for (const GlobalDecl& g : program.globals) {
    out << "shared " << (g.type == ValueType::Bool ? "bool " : "int ") << g.name << " = ";
    if (g.type == ValueType::Bool) {
      out << (g.initial ? "true" : "false");
    } else {
      out << g.initial;
    }
    out << ";\n";
  }
  for (const LockDecl& l : program.locks) out << "lock " << l.name << ";\n";
  for (const CondDecl& c : program.conds) out << "cond " << c.name << " on " << c.monitor << ";\n";
  for (const MethodId& id : program.method_order) {
    const MethodBody& m = program.method(id);
    out << '\n' << m.name << '(';
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (i) out << ", ";
      out << m.params[i];
    }
    out << ") ";
    print_block(out, m.statements, 0);
    out << '\n';
  }
  return out.str();
}

bool structurally_equal(const Program& a, const Program& b) {
  if (a.globals.size() != b.globals.size() || a.locks.size() != b.locks.size() ||
      a.conds.size() != b.conds.size() || a.method_order != b.method_order || a.entry != b.entry) {
    return false;
  }
  for (std::size_t i = 0; i < a.globals.size(); ++i) {
    const auto& x = a.globals[i];
    const auto& y = b.globals[i];
    if (x.name != y.name || x.type != y.type || x.initial != y.initial) return false;
  }
  for (std::size_t i = 0; i < a.locks.size(); ++i) {
    if (a.locks[i].name != b.locks[i].name) return false;
  }
  for (std::size_t i = 0; i < a.conds.size(); ++i) {
    if (a.conds[i].name != b.conds[i].name || a.conds[i].monitor != b.conds[i].monitor) {
      return false;
    }
  }
  for (const MethodId& id : a.method_order) {
    const MethodBody& x = a.method(id);
    const MethodBody& y = b.method(id);
    if (x.params != y.params || !equal(x.statements, y.statements)) return false;
  }
  return true;
}

}  // namespace confx
