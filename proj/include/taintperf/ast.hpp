#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace taintperf::dsl {

using NodeId = std::uint32_t;

struct SourcePos {
  int line = 0;
  int column = 0;
};

enum class UnaryOp { Neg, Not };
enum class BinaryOp { Add, Sub, Mul, Div, Mod, Lt, Le, Gt, Ge, Eq, Ne, And, Or };

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct NumberLit {
  double value = 0;
  bool is_int = true;
};
struct VarRef {
  std::string name;
};
struct Unary {
  UnaryOp op;
  ExprPtr operand;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs;
  ExprPtr rhs;
};
struct IndexRead {
  std::string array;
  ExprPtr index;
};
/// Call of a user function or a builtin (pow, log, min, array, ...).
struct Call {
  std::string callee;
  std::vector<ExprPtr> args;
};
/// `extern("Routine", args...)`: dispatched through the library database.
struct ExternCall {
  std::string routine;
  std::vector<ExprPtr> args;
};

struct Expr {
  NodeId id = 0;
  SourcePos pos;
  std::variant<NumberLit, VarRef, Unary, Binary, IndexRead, Call, ExternCall> node;
};

struct Stmt;
using Block = std::vector<Stmt>;

struct LetStmt {
  std::string name;
  ExprPtr value;
};
struct AssignStmt {
  std::string name;
  ExprPtr value;
};
struct IndexAssignStmt {
  std::string array;
  ExprPtr index;
  ExprPtr value;
};
struct IfStmt {
  ExprPtr cond;
  Block then_body;
  Block else_body;
  bool has_else = false;
};
struct WhileStmt {
  ExprPtr cond;
  Block body;
};
/// `for v in lo..hi [step s] { ... }`; bounds and step are evaluated once on entry.
struct ForStmt {
  std::string var;
  ExprPtr lo;
  ExprPtr hi;
  ExprPtr step;  // null means 1
  Block body;
};
struct ReturnStmt {
  ExprPtr value;  // may be null
};
/// `source(var, "label")`: attaches a parameter label to a variable.
struct SourceStmt {
  std::string var;
  std::string label;
};
struct ExprStmt {
  ExprPtr expr;
};

struct Stmt {
  NodeId id = 0;
  SourcePos pos;
  std::variant<LetStmt, AssignStmt, IndexAssignStmt, IfStmt, WhileStmt, ForStmt, ReturnStmt, SourceStmt, ExprStmt>
      node;
};

enum class ParamKind { Explicit, Implicit };

struct ParamDecl {
  std::string name;
  ParamKind kind = ParamKind::Explicit;
  SourcePos pos;
};

struct Function {
  NodeId id = 0;
  std::string name;
  std::vector<std::string> params;
  Block body;
  SourcePos pos;
};

/// A parsed PTL program. Move-only; share it as `std::shared_ptr<const Program>`.
struct Program {
  std::vector<ParamDecl> param_decls;
  std::vector<Function> functions;
  std::string entry = "main";
  NodeId node_count = 0;

  [[nodiscard]] const Function* find_function(const std::string& name) const;
  [[nodiscard]] const ParamDecl* find_param(const std::string& name) const;
};

/// Renders a program back to PTL source text.
std::string to_source(const Program& program);

/// Structural equality ignoring node ids and source positions.
bool same_structure(const Program& a, const Program& b);

/// Builtin functions callable from PTL (not user functions).
bool is_builtin(const std::string& name);

/// Visits every node id-carrying entity in preorder.
template <typename StmtFn, typename ExprFn>
void walk(const Block& block, StmtFn&& on_stmt, ExprFn&& on_expr);

template <typename ExprFn>
void walk_expr(const Expr& e, ExprFn&& on_expr) {
  on_expr(e);
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Unary>) {
          walk_expr(*n.operand, on_expr);
        } else if constexpr (std::is_same_v<T, Binary>) {
          walk_expr(*n.lhs, on_expr);
          walk_expr(*n.rhs, on_expr);
        } else if constexpr (std::is_same_v<T, IndexRead>) {
          walk_expr(*n.index, on_expr);
        } else if constexpr (std::is_same_v<T, Call> || std::is_same_v<T, ExternCall>) {
          for (const auto& a : n.args) walk_expr(*a, on_expr);
        }
      },
      e.node);
}

template <typename StmtFn, typename ExprFn>
void walk(const Block& block, StmtFn&& on_stmt, ExprFn&& on_expr) {
  for (const auto& s : block) {
    on_stmt(s);
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
            walk_expr(*n.value, on_expr);
          } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
            walk_expr(*n.index, on_expr);
            walk_expr(*n.value, on_expr);
          } else if constexpr (std::is_same_v<T, IfStmt>) {
            walk_expr(*n.cond, on_expr);
            walk(n.then_body, on_stmt, on_expr);
            walk(n.else_body, on_stmt, on_expr);
          } else if constexpr (std::is_same_v<T, WhileStmt>) {
            walk_expr(*n.cond, on_expr);
            walk(n.body, on_stmt, on_expr);
          } else if constexpr (std::is_same_v<T, ForStmt>) {
            walk_expr(*n.lo, on_expr);
            walk_expr(*n.hi, on_expr);
            if (n.step) walk_expr(*n.step, on_expr);
            walk(n.body, on_stmt, on_expr);
          } else if constexpr (std::is_same_v<T, ReturnStmt>) {
            if (n.value) walk_expr(*n.value, on_expr);
          } else if constexpr (std::is_same_v<T, ExprStmt>) {
            walk_expr(*n.expr, on_expr);
          }
        },
        s.node);
  }
}

}  // namespace taintperf::dsl
