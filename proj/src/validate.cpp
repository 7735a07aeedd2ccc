#include "taintperf/validate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

namespace taintperf::dsl {

const LoopInfo* ValidationReport::constant_loop(NodeId id) const {
  for (const auto& l : constant_loops)
    if (l.id == id) return &l;
  return nullptr;
}

std::vector<LoopInfo> ValidationReport::loops_of(const std::string& function) const {
  std::vector<LoopInfo> out;
  for (const auto& l : constant_loops)
    if (l.function == function) out.push_back(l);
  for (const auto& l : dynamic_loops)
    if (l.function == function) out.push_back(l);
  std::sort(out.begin(), out.end(), [](const LoopInfo& a, const LoopInfo& b) { return a.id < b.id; });
  return out;
}

namespace {

std::optional<double> literal_value(const Expr& e) {
  if (const auto* n = std::get_if<NumberLit>(&e.node)) return n->value;
  if (const auto* u = std::get_if<Unary>(&e.node); u && u->op == UnaryOp::Neg)
    if (auto v = literal_value(*u->operand)) return -*v;
  return std::nullopt;
}

void collect_writes(const Block& body, std::set<std::string>& out) {
  walk(
      body,
      [&](const Stmt& s) {
        if (const auto* a = std::get_if<AssignStmt>(&s.node)) out.insert(a->name);
        if (const auto* l = std::get_if<LetStmt>(&s.node)) out.insert(l->name);
        if (const auto* f = std::get_if<ForStmt>(&s.node)) out.insert(f->var);
      },
      [](const Expr&) {});
}

int builtin_arity(const std::string& name) {
  static const std::map<std::string, int> kArity = {{"pow", 2},   {"log", 1},  {"log2", 1}, {"sqrt", 1},
                                                    {"min", 2},   {"max", 2},  {"floor", 1}, {"ceil", 1},
                                                    {"abs", 1},   {"array", 1}, {"len", 1}};
  return kArity.at(name);
}

class Checker {
public:
  Checker(const Program& prog, const libdb::LibraryDB* db, ValidationReport& rep) : prog_(prog), db_(db), rep_(rep) {
    for (const auto& d : prog.param_decls)
      if (d.kind == ParamKind::Explicit) globals_.insert(d.name);
  }

  void run() {
    const Function* entry = prog_.find_function(prog_.entry);
    if (!entry) {
      error("missing entry function '" + prog_.entry + "'", {}, "");
    } else if (!entry->params.empty()) {
      error("entry function '" + prog_.entry + "' must not take arguments", entry->pos, entry->name);
    }
    for (const auto& d : prog_.param_decls) {
      if (d.kind == ParamKind::Implicit && !(db_ && db_->declares_implicit(d.name)))
        error("implicit parameter '" + d.name + "' is not declared by the library database", d.pos, "");
    }
    for (const auto& fn : prog_.functions) check_function(fn);
    find_cycles();
  }

private:
  void error(std::string msg, SourcePos pos, const std::string& fn) { rep_.errors.push_back({std::move(msg), fn, pos}); }

  void check_function(const Function& fn) {
    fn_ = &fn;
    scope_.clear();
    for (const auto& p : fn.params) declare(p, fn.pos);
    block(fn.body, 0);
  }

  void declare(const std::string& name, SourcePos pos) {
    if (globals_.count(name)) error("'" + name + "' shadows the global parameter of the same name", pos, fn_->name);
    scope_.insert(name);
  }

  void require_read(const std::string& name, SourcePos pos) {
    if (!scope_.count(name) && !globals_.count(name)) error("unknown variable '" + name + "'", pos, fn_->name);
  }

  void require_write(const std::string& name, SourcePos pos) {
    if (globals_.count(name)) {
      error("cannot assign to parameter '" + name + "'", pos, fn_->name);
    } else if (!scope_.count(name)) {
      error("write to undeclared variable '" + name + "'", pos, fn_->name);
    }
  }

  void block(const Block& b, int loop_depth) {
    for (const auto& s : b) stmt(s, loop_depth);
  }

  void stmt(const Stmt& s, int loop_depth) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, LetStmt>) {
            expr(*n.value);
            declare(n.name, s.pos);
          } else if constexpr (std::is_same_v<T, AssignStmt>) {
            expr(*n.value);
            require_write(n.name, s.pos);
          } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
            expr(*n.index);
            expr(*n.value);
            require_write(n.array, s.pos);
          } else if constexpr (std::is_same_v<T, IfStmt>) {
            expr(*n.cond);
            block(n.then_body, loop_depth);
            block(n.else_body, loop_depth);
          } else if constexpr (std::is_same_v<T, WhileStmt>) {
            expr(*n.cond);
            loop(s, nullptr);
            block(n.body, loop_depth + 1);
          } else if constexpr (std::is_same_v<T, ForStmt>) {
            expr(*n.lo);
            expr(*n.hi);
            if (n.step) expr(*n.step);
            declare(n.var, s.pos);
            loop(s, &n);
            block(n.body, loop_depth + 1);
          } else if constexpr (std::is_same_v<T, ReturnStmt>) {
            if (n.value) expr(*n.value);
            if (loop_depth > 0)
              error("return inside a loop body (loops must exit through their condition)", s.pos, fn_->name);
          } else if constexpr (std::is_same_v<T, SourceStmt>) {
            require_read(n.var, s.pos);
            if (!prog_.find_param(n.label))
              error("source label '" + n.label + "' is not a declared parameter", s.pos, fn_->name);
          } else if constexpr (std::is_same_v<T, ExprStmt>) {
            expr(*n.expr);
          }
        },
        s.node);
  }

  void loop(const Stmt& s, const ForStmt* f) {
    LoopInfo info{s.id, fn_->name, s.pos, std::nullopt};
    if (f) {
      auto lo = literal_value(*f->lo);
      auto hi = literal_value(*f->hi);
      auto step = f->step ? literal_value(*f->step) : std::optional<double>(1.0);
      std::set<std::string> writes;
      collect_writes(f->body, writes);
      if (lo && hi && step && *step != 0 && !writes.count(f->var)) {
        double span = *step > 0 ? (*hi - *lo) / *step : (*lo - *hi) / -*step;
        info.trip_count = static_cast<std::int64_t>(std::max(0.0, std::ceil(span)));
      }
    }
    (info.trip_count ? rep_.constant_loops : rep_.dynamic_loops).push_back(info);
  }

  void expr(const Expr& e) {
    walk_expr(e, [&](const Expr& x) {
      if (const auto* v = std::get_if<VarRef>(&x.node)) {
        require_read(v->name, x.pos);
      } else if (const auto* ir = std::get_if<IndexRead>(&x.node)) {
        require_read(ir->array, x.pos);
      } else if (const auto* c = std::get_if<Call>(&x.node)) {
        call(*c, x.pos);
      } else if (const auto* ec = std::get_if<ExternCall>(&x.node)) {
        extern_call(*ec, x.pos);
      }
    });
  }

  void call(const Call& c, SourcePos pos) {
    if (const Function* callee = prog_.find_function(c.callee)) {
      if (callee->params.size() != c.args.size())
        error("'" + c.callee + "' expects " + std::to_string(callee->params.size()) + " argument(s), got " +
                  std::to_string(c.args.size()),
              pos, fn_->name);
      edges_[fn_->name].insert(c.callee);
    } else if (is_builtin(c.callee)) {
      if (static_cast<int>(c.args.size()) != builtin_arity(c.callee))
        error("builtin '" + c.callee + "' expects " + std::to_string(builtin_arity(c.callee)) + " argument(s)", pos,
              fn_->name);
    } else {
      error("unresolved call target '" + c.callee + "'", pos, fn_->name);
    }
  }

  void extern_call(const ExternCall& c, SourcePos pos) {
    const libdb::LibEntry* entry = db_ ? db_->find(c.routine) : nullptr;
    if (!entry) {
      error("unresolved call target '" + c.routine + "' (not in the library database)", pos, fn_->name);
      return;
    }
    if (static_cast<int>(c.args.size()) != entry->arity) {
      error("'" + c.routine + "' expects " + std::to_string(entry->arity) + " argument(s), got " +
                std::to_string(c.args.size()),
            pos, fn_->name);
      return;
    }
    auto require_lvalue = [&](int arg) {
      const auto& a = *c.args[static_cast<std::size_t>(arg - 1)];
      const auto* v = std::get_if<VarRef>(&a.node);
      if (!v) {
        error("argument " + std::to_string(arg) + " of '" + c.routine + "' must be a variable", a.pos, fn_->name);
      } else {
        require_write(v->name, a.pos);
      }
    };
    for (const auto& w : entry->source_writes) require_lvalue(w.arg);
    for (const auto& w : entry->value_writes) require_lvalue(w.arg);
  }

  // Tarjan SCC over the static call graph, restricted to functions reachable from the entry.
  void find_cycles() {
    std::set<std::string> reachable;
    std::function<void(const std::string&)> reach = [&](const std::string& f) {
      if (!reachable.insert(f).second) return;
      for (const auto& g : edges_[f]) reach(g);
    };
    if (prog_.find_function(prog_.entry)) reach(prog_.entry);

    std::map<std::string, int> index, low;
    std::set<std::string> on_stack;
    std::vector<std::string> stack;
    int counter = 0;
    std::function<void(const std::string&)> strong = [&](const std::string& v) {
      index[v] = low[v] = counter++;
      stack.push_back(v);
      on_stack.insert(v);
      for (const auto& w : edges_[v]) {
        if (!index.count(w)) {
          strong(w);
          low[v] = std::min(low[v], low[w]);
        } else if (on_stack.count(w)) {
          low[v] = std::min(low[v], index[w]);
        }
      }
      if (low[v] == index[v]) {
        std::vector<std::string> comp;
        std::string w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack.erase(w);
          comp.push_back(w);
        } while (w != v);
        bool self_loop = edges_[v].count(v) > 0;
        if (comp.size() > 1 || self_loop) {
          std::sort(comp.begin(), comp.end());
          rep_.recursion_cycles.push_back(comp);
        }
      }
    };
    for (const auto& f : reachable)
      if (!index.count(f)) strong(f);
    std::sort(rep_.recursion_cycles.begin(), rep_.recursion_cycles.end());
    for (const auto& cyc : rep_.recursion_cycles) {
      std::string names;
      for (const auto& n : cyc) names += (names.empty() ? "" : ", ") + n;
      const Function* f = prog_.find_function(cyc.front());
      rep_.warnings.push_back({"recursive call cycle {" + names + "}: compute volume is over-approximated",
                               cyc.front(), f ? f->pos : SourcePos{}});
    }
  }

  const Program& prog_;
  const libdb::LibraryDB* db_;
  ValidationReport& rep_;
  std::set<std::string> globals_;
  std::set<std::string> scope_;
  const Function* fn_ = nullptr;
  std::map<std::string, std::set<std::string>> edges_;
};

}  // namespace

ValidationReport validate(const Program& program, const libdb::LibraryDB* db) {
  ValidationReport rep;
  Checker(program, db, rep).run();
  auto by_id = [](const LoopInfo& a, const LoopInfo& b) { return a.id < b.id; };
  std::sort(rep.constant_loops.begin(), rep.constant_loops.end(), by_id);
  std::sort(rep.dynamic_loops.begin(), rep.dynamic_loops.end(), by_id);
  return rep;
}

std::string to_json(const ValidationReport& report) {
  using nlohmann::json;
  auto diag = [](const Diagnostic& d) {
    return json{{"message", d.message}, {"function", d.function}, {"line", d.pos.line}, {"column", d.pos.column}};
  };
  auto loop = [](const LoopInfo& l) {
    json j{{"id", l.id}, {"function", l.function}, {"line", l.pos.line}};
    if (l.trip_count) j["trip_count"] = *l.trip_count;
    return j;
  };
  json j{{"schema_version", 1}, {"ok", report.ok()}};
  j["errors"] = json::array();
  for (const auto& d : report.errors) j["errors"].push_back(diag(d));
  j["warnings"] = json::array();
  for (const auto& d : report.warnings) j["warnings"].push_back(diag(d));
  j["recursion_cycles"] = report.recursion_cycles;
  j["constant_loops"] = json::array();
  for (const auto& l : report.constant_loops) j["constant_loops"].push_back(loop(l));
  j["dynamic_loops"] = json::array();
  for (const auto& l : report.dynamic_loops) j["dynamic_loops"].push_back(loop(l));
  return j.dump(2) + "\n";
}

}  // namespace taintperf::dsl
