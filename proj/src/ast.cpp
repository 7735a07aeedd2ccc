#include "taintperf/ast.hpp"

#include <charconv>
#include <sstream>
#include <unordered_set>

namespace taintperf::dsl {

const Function* Program::find_function(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

const ParamDecl* Program::find_param(const std::string& name) const {
  for (const auto& p : param_decls)
    if (p.name == name) return &p;
  return nullptr;
}

bool is_builtin(const std::string& name) {
  static const std::unordered_set<std::string> kBuiltins = {"pow",   "log",  "log2", "sqrt", "min", "max",
                                                            "floor", "ceil", "abs",  "array", "len"};
  return kBuiltins.count(name) > 0;
}

namespace {

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::Or: return 1;
    case BinaryOp::And: return 2;
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge:
    case BinaryOp::Eq:
    case BinaryOp::Ne: return 3;
    case BinaryOp::Add:
    case BinaryOp::Sub: return 4;
    case BinaryOp::Mul:
    case BinaryOp::Div:
    case BinaryOp::Mod: return 5;
  }
  return 0;
}

const char* spelling(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Mod: return "%";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::And: return "&&";
    case BinaryOp::Or: return "||";
  }
  return "?";
}

int expr_precedence(const Expr& e) {
  if (const auto* b = std::get_if<Binary>(&e.node)) return precedence(b->op);
  if (std::holds_alternative<Unary>(e.node)) return 6;
  return 7;
}

std::string number_text(const NumberLit& lit) {
  char buf[64];
  if (lit.is_int) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(lit.value));
    return std::string(buf, p);
  }
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, lit.value);
  std::string s(buf, p);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

class Printer {
public:
  std::string program(const Program& prog) {
    for (const auto& d : prog.param_decls)
      out_ << (d.kind == ParamKind::Implicit ? "implicit param " : "param ") << d.name << ";\n";
    if (!prog.param_decls.empty()) out_ << "\n";
    for (std::size_t i = 0; i < prog.functions.size(); ++i) {
      const auto& fn = prog.functions[i];
      if (i) out_ << "\n";
      out_ << "fn " << fn.name << "(";
      for (std::size_t k = 0; k < fn.params.size(); ++k) out_ << (k ? ", " : "") << fn.params[k];
      out_ << ") ";
      block(fn.body, 0);
      out_ << "\n";
    }
    return out_.str();
  }

private:
  void indent(int depth) {
    for (int i = 0; i < depth; ++i) out_ << "  ";
  }

  void block(const Block& b, int depth) {
    out_ << "{\n";
    for (const auto& s : b) stmt(s, depth + 1);
    indent(depth);
    out_ << "}";
  }

  void if_tail(const IfStmt& n, int depth) {
    out_ << "if " << expr(*n.cond) << " ";
    block(n.then_body, depth);
    if (n.has_else) {
      out_ << " else ";
      if (n.else_body.size() == 1 && std::holds_alternative<IfStmt>(n.else_body.front().node)) {
        if_tail(std::get<IfStmt>(n.else_body.front().node), depth);
      } else {
        block(n.else_body, depth);
      }
    }
  }

  void stmt(const Stmt& s, int depth) {
    indent(depth);
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, LetStmt>) {
            out_ << "let " << n.name << " = " << expr(*n.value) << ";";
          } else if constexpr (std::is_same_v<T, AssignStmt>) {
            out_ << n.name << " = " << expr(*n.value) << ";";
          } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
            out_ << n.array << "[" << expr(*n.index) << "] = " << expr(*n.value) << ";";
          } else if constexpr (std::is_same_v<T, IfStmt>) {
            if_tail(n, depth);
          } else if constexpr (std::is_same_v<T, WhileStmt>) {
            out_ << "while " << expr(*n.cond) << " ";
            block(n.body, depth);
          } else if constexpr (std::is_same_v<T, ForStmt>) {
            out_ << "for " << n.var << " in " << expr(*n.lo) << ".." << expr(*n.hi);
            if (n.step) out_ << " step " << expr(*n.step);
            out_ << " ";
            block(n.body, depth);
          } else if constexpr (std::is_same_v<T, ReturnStmt>) {
            out_ << "return";
            if (n.value) out_ << " " << expr(*n.value);
            out_ << ";";
          } else if constexpr (std::is_same_v<T, SourceStmt>) {
            out_ << "source(" << n.var << ", \"" << n.label << "\");";
          } else if constexpr (std::is_same_v<T, ExprStmt>) {
            out_ << expr(*n.expr) << ";";
          }
        },
        s.node);
    out_ << "\n";
  }

  std::string wrapped(const Expr& e, int min_prec) {
    std::string s = expr(e);
    return expr_precedence(e) < min_prec ? "(" + s + ")" : s;
  }

  std::string args(const std::vector<ExprPtr>& list, bool leading_comma) {
    std::string s;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i || leading_comma) s += ", ";
      s += expr(*list[i]);
    }
    return s;
  }

  std::string expr(const Expr& e) {
    return std::visit(
        [&](const auto& n) -> std::string {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, NumberLit>) {
            return number_text(n);
          } else if constexpr (std::is_same_v<T, VarRef>) {
            return n.name;
          } else if constexpr (std::is_same_v<T, Unary>) {
            return std::string(n.op == UnaryOp::Neg ? "-" : "!") + wrapped(*n.operand, 6);
          } else if constexpr (std::is_same_v<T, Binary>) {
            int p = precedence(n.op);
            return wrapped(*n.lhs, p) + " " + spelling(n.op) + " " + wrapped(*n.rhs, p + 1);
          } else if constexpr (std::is_same_v<T, IndexRead>) {
            return n.array + "[" + expr(*n.index) + "]";
          } else if constexpr (std::is_same_v<T, Call>) {
            return n.callee + "(" + args(n.args, false) + ")";
          } else {
            return "extern(\"" + n.routine + "\"" + args(n.args, true) + ")";
          }
        },
        e.node);
  }

  std::ostringstream out_;
};

bool same_expr(const Expr& a, const Expr& b);

bool same_exprs(const std::vector<ExprPtr>& a, const std::vector<ExprPtr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_expr(*a[i], *b[i])) return false;
  return true;
}

bool same_opt(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  return same_expr(*a, *b);
}

bool same_expr(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, NumberLit>) {
          return x.value == y.value && x.is_int == y.is_int;
        } else if constexpr (std::is_same_v<T, VarRef>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return x.op == y.op && same_expr(*x.operand, *y.operand);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && same_expr(*x.lhs, *y.lhs) && same_expr(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, IndexRead>) {
          return x.array == y.array && same_expr(*x.index, *y.index);
        } else if constexpr (std::is_same_v<T, Call>) {
          return x.callee == y.callee && same_exprs(x.args, y.args);
        } else {
          return x.routine == y.routine && same_exprs(x.args, y.args);
        }
      },
      a.node);
}

bool same_block(const Block& a, const Block& b);

bool same_stmt(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
          return x.name == y.name && same_expr(*x.value, *y.value);
        } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
          return x.array == y.array && same_expr(*x.index, *y.index) && same_expr(*x.value, *y.value);
        } else if constexpr (std::is_same_v<T, IfStmt>) {
          return x.has_else == y.has_else && same_expr(*x.cond, *y.cond) && same_block(x.then_body, y.then_body) &&
                 same_block(x.else_body, y.else_body);
        } else if constexpr (std::is_same_v<T, WhileStmt>) {
          return same_expr(*x.cond, *y.cond) && same_block(x.body, y.body);
        } else if constexpr (std::is_same_v<T, ForStmt>) {
          return x.var == y.var && same_expr(*x.lo, *y.lo) && same_expr(*x.hi, *y.hi) && same_opt(x.step, y.step) &&
                 same_block(x.body, y.body);
        } else if constexpr (std::is_same_v<T, ReturnStmt>) {
          return same_opt(x.value, y.value);
        } else if constexpr (std::is_same_v<T, SourceStmt>) {
          return x.var == y.var && x.label == y.label;
        } else {
          return same_expr(*x.expr, *y.expr);
        }
      },
      a.node);
}

bool same_block(const Block& a, const Block& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_stmt(a[i], b[i])) return false;
  return true;
}

}  // namespace

std::string to_source(const Program& program) { return Printer{}.program(program); }

bool same_structure(const Program& a, const Program& b) {
  if (a.entry != b.entry || a.param_decls.size() != b.param_decls.size() ||
      a.functions.size() != b.functions.size())
    return false;
  for (std::size_t i = 0; i < a.param_decls.size(); ++i)
    if (a.param_decls[i].name != b.param_decls[i].name || a.param_decls[i].kind != b.param_decls[i].kind) return false;
  for (std::size_t i = 0; i < a.functions.size(); ++i) {
    const auto& fa = a.functions[i];
    const auto& fb = b.functions[i];
    if (fa.name != fb.name || fa.params != fb.params || !same_block(fa.body, fb.body)) return false;
  }
  return true;
}

}  // namespace taintperf::dsl
