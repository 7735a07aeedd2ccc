#include "taintperf/taint.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "taintperf/validate.hpp"

namespace taintperf::taint {

using namespace dsl;

std::string path_string(const CallPath& path) {
  std::string s;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(path[i]);
  }
  return s;
}

CallPath parse_path(const std::string& text) {
  CallPath out;
  if (text.empty() || text == "-") return out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("malformed call path '" + text + "'");
    out.push_back(static_cast<NodeId>(std::stoul(part)));
  }
  return out;
}

Value Value::number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.007199254740992e15)
    return integer(static_cast<std::int64_t>(v));
  return real(v);
}

double Value::as_real() const {
  switch (kind) {
    case Kind::Int: return static_cast<double>(i);
    case Kind::Real: return r;
    case Kind::Array: break;
  }
  throw std::invalid_argument("array used as a scalar");
}

// ---------------------------------------------------------------------------
// TaintState

void TaintState::push_frame() { frames_.emplace_back(); }

void TaintState::pop_frame() {
  if (frames_.empty()) throw std::logic_error("frame stack underflow");
  frames_.pop_back();
}

Slot& TaintState::bind_global(const std::string& name, Value v, LabelSet labels) {
  auto& slot = globals_[name];
  slot = {std::move(v), labels};
  return slot;
}

Slot& TaintState::assign(const std::string& name, Value v, LabelSet labels) {
  if (frames_.empty()) throw std::logic_error("assignment outside of any frame");
  if (globals_.count(name) && !frames_.back().count(name))
    throw std::invalid_argument("cannot assign to parameter '" + name + "'");
  auto& slot = frames_.back()[name];
  slot = {std::move(v), labels | control()};
  return slot;
}

Slot* TaintState::lookup(const std::string& name) {
  if (!frames_.empty()) {
    auto it = frames_.back().find(name);
    if (it != frames_.back().end()) return &it->second;
  }
  auto g = globals_.find(name);
  return g == globals_.end() ? nullptr : &g->second;
}

const Slot* TaintState::lookup(const std::string& name) const { return const_cast<TaintState*>(this)->lookup(name); }

bool TaintState::is_global(const std::string& name) const {
  return globals_.count(name) && (frames_.empty() || !frames_.back().count(name));
}

void TaintState::mark_source(const std::string& var, const std::string& label) {
  Slot* slot = lookup(var);
  if (!slot) throw std::invalid_argument("source: unknown variable '" + var + "'");
  slot->labels |= params_.label(label);
  if (slot->value.arr) slot->value.arr->labels |= params_.label(label);
}

void TaintState::enter_control(LabelSet condition_labels) {
  control_.push_back(condition_labels);
  cumulative_.push_back(control() | condition_labels);
}

void TaintState::exit_control(const std::vector<std::string>& untaken_writes, bool implicit) {
  if (control_.empty()) throw std::logic_error("control stack underflow");
  LabelSet full = control();
  control_.pop_back();
  cumulative_.pop_back();
  if (implicit) taint_writes(untaken_writes, full);
}

void TaintState::taint_writes(const std::vector<std::string>& names, LabelSet labels) {
  if (labels.empty() || frames_.empty()) return;
  for (const auto& n : names) {
    auto it = frames_.back().find(n);
    if (it == frames_.back().end()) continue;
    it->second.labels |= labels;
    if (it->second.value.arr) it->second.value.arr->labels |= labels;
  }
}

void TaintState::truncate_control(std::size_t depth) {
  control_.resize(std::min(depth, control_.size()));
  cumulative_.resize(control_.size());
}

LabelSet propagate_expr(const TaintState& state, const Expr& expr) {
  LabelSet out = state.control();
  walk_expr(expr, [&](const Expr& e) {
    const std::string* name = nullptr;
    if (const auto* v = std::get_if<VarRef>(&e.node)) name = &v->name;
    if (const auto* ir = std::get_if<IndexRead>(&e.node)) name = &ir->array;
    if (const auto* c = std::get_if<Call>(&e.node); c && c->callee == "len" && !c->args.empty())
      if (const auto* v = std::get_if<VarRef>(&c->args.front()->node)) name = &v->name;
    if (!name) return;
    const Slot* slot = state.lookup(*name);
    if (!slot) throw std::invalid_argument("unknown variable '" + *name + "'");
    out |= slot->labels;
    if (slot->value.arr && !std::holds_alternative<VarRef>(e.node)) out |= slot->value.arr->labels;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Trace helpers

void TripStats::add(std::uint64_t trips) {
  if (entries == 0) {
    min = max = trips;
  } else {
    min = std::min(min, trips);
    max = std::max(max, trips);
  }
  ++entries;
  total += trips;
  for (int b = 0; b < 8; ++b) {
    hash ^= (trips >> (8 * b)) & 0xffU;
    hash *= 1099511628211ULL;
  }
}

void TripStats::merge(const TripStats& other) {
  if (other.entries == 0) return;
  if (entries == 0) {
    *this = other;
    return;
  }
  min = std::min(min, other.min);
  max = std::max(max, other.max);
  entries += other.entries;
  total += other.total;
  hash = (hash ^ other.hash) * 1099511628211ULL;
}

std::vector<UnvisitedBranch> TraceReport::unvisited_tainted_branches() const {
  std::vector<UnvisitedBranch> out;
  for (const auto& [key, b] : branches) {
    if (b.labels.empty()) continue;
    if (b.then_nonempty && b.taken_then == 0) out.push_back({key, "then", b.labels});
    if (b.else_nonempty && b.taken_else == 0) out.push_back({key, "else", b.labels});
  }
  return out;
}

std::uint64_t TraceReport::statement_count(const SiteKey& key) const {
  auto it = statements.find(key);
  return it == statements.end() ? 0 : it->second;
}

// ---------------------------------------------------------------------------
// Interpreter

namespace {

struct StaticInfo {
  std::unordered_map<NodeId, std::vector<std::string>> then_writes, else_writes, body_writes;
  std::unordered_map<NodeId, bool> if_has_return;
};

void writes_of(const Block& b, std::set<std::string>& out) {
  walk(
      b,
      [&](const Stmt& s) {
        if (const auto* a = std::get_if<AssignStmt>(&s.node)) out.insert(a->name);
        if (const auto* l = std::get_if<LetStmt>(&s.node)) out.insert(l->name);
        if (const auto* ia = std::get_if<IndexAssignStmt>(&s.node)) out.insert(ia->array);
        if (const auto* f = std::get_if<ForStmt>(&s.node)) out.insert(f->var);
      },
      [&](const Expr& e) {
        // extern calls that write through their arguments
        if (const auto* ec = std::get_if<ExternCall>(&e.node))
          for (const auto& a : ec->args)
            if (const auto* v = std::get_if<VarRef>(&a->node)) out.insert(v->name);
      });
}

bool contains_return(const Block& b) {
  bool found = false;
  walk(
      b, [&](const Stmt& s) { found = found || std::holds_alternative<ReturnStmt>(s.node); }, [](const Expr&) {});
  return found;
}

std::vector<std::string> as_vec(const std::set<std::string>& s) { return {s.begin(), s.end()}; }

StaticInfo analyze_static(const Program& prog) {
  StaticInfo info;
  for (const auto& fn : prog.functions) {
    walk(
        fn.body,
        [&](const Stmt& s) {
          std::set<std::string> w;
          if (const auto* n = std::get_if<IfStmt>(&s.node)) {
            writes_of(n->then_body, w);
            info.then_writes[s.id] = as_vec(w);
            w.clear();
            writes_of(n->else_body, w);
            info.else_writes[s.id] = as_vec(w);
            info.if_has_return[s.id] = contains_return(n->then_body) || contains_return(n->else_body);
          } else if (const auto* n = std::get_if<WhileStmt>(&s.node)) {
            writes_of(n->body, w);
            info.body_writes[s.id] = as_vec(w);
          } else if (const auto* n = std::get_if<ForStmt>(&s.node)) {
            writes_of(n->body, w);
            w.insert(n->var);
            info.body_writes[s.id] = as_vec(w);
          }
        },
        [](const Expr&) {});
  }
  return info;
}

struct Eval {
  Value v;
  LabelSet l;
};

struct LoopAcc {
  LabelSet labels;
  TripStats trips;
  std::uint64_t evaluations = 0;
  std::size_t max_condition_labels = 0;
};

struct BranchAcc {
  LabelSet labels;
  bool tainted = false;
  std::uint64_t taken_then = 0, taken_else = 0;
  bool then_nonempty = false, else_nonempty = false;
};

struct ExternAcc {
  std::string routine;
  LabelSet dependency;
  bool has_dependency = false;
  std::optional<std::string> hint;
  std::uint64_t calls = 0;
};

using AccKey = std::pair<NodeId, std::uint32_t>;

ParamTable make_param_table(const Program& prog, const libdb::LibraryDB& db) {
  ParamTable t;
  for (const auto& d : prog.param_decls) t.intern(d.name);
  for (const auto& p : db.implicit_params()) t.intern(p);
  return t;
}

class Interpreter {
public:
  Interpreter(const Program& prog, const ParamValues& values, const libdb::LibraryDB& db, const RunOptions& opts)
      : prog_(prog), values_(values), db_(db), opts_(opts), state_(make_param_table(prog, db)),
        static_(analyze_static(prog)) {}

  TraceReport run() {
    for (const auto& d : prog_.param_decls) {
      if (d.kind != ParamKind::Explicit) continue;
      auto it = values_.find(d.name);
      if (it == values_.end()) throw std::invalid_argument("missing value for parameter '" + d.name + "'");
      state_.bind_global(d.name, Value::number(it->second), {});
    }
    const Function* entry = prog_.find_function(prog_.entry);
    std::uint32_t root = intern({});
    invocations_[root] = {entry->name, 1};
    active_.insert(entry->name);
    state_.push_frame();
    frames_.push_back({entry, root, state_.control_depth()});
    exec_block(entry->body);
    state_.truncate_control(frames_.back().control_base);
    frames_.pop_back();
    state_.pop_frame();
    if (state_.control_depth() != 0) throw std::logic_error("control stack not balanced at program exit");
    return report();
  }

private:
  struct Frame {
    const Function* fn;
    std::uint32_t path;
    std::size_t control_base;
  };
  enum class Flow { Normal, Return };

  std::uint32_t intern(const CallPath& p) {
    auto [it, inserted] = path_ids_.emplace(p, static_cast<std::uint32_t>(paths_.size()));
    if (inserted) paths_.push_back(p);
    return it->second;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw RunError(msg, paths_[frames_.back().path]); }

  std::uint32_t cur_path() const { return frames_.back().path; }

  // ---- statements

  Flow exec_block(const Block& b) {
    for (const auto& s : b)
      if (exec(s) == Flow::Return) return Flow::Return;
    return Flow::Normal;
  }

  Flow exec(const Stmt& s) {
    ++stmt_counts_[{s.id, cur_path()}];
    return std::visit(
        [&](const auto& n) -> Flow {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
            Eval e = eval(*n.value);
            state_.assign(n.name, std::move(e.v), e.l);
          } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
            Eval idx = eval(*n.index);
            Eval val = eval(*n.value);
            Slot* slot = state_.lookup(n.array);
            if (!slot || !slot->value.arr) fail("'" + n.array + "' is not an array");
            auto& arr = *slot->value.arr;
            auto i = index_of(idx.v, arr.elems.size());
            arr.elems[i] = scalar(val.v);
            arr.labels |= idx.l | val.l | state_.control();
          } else if constexpr (std::is_same_v<T, IfStmt>) {
            return exec_if(s, n);
          } else if constexpr (std::is_same_v<T, WhileStmt>) {
            exec_while(s, n);
          } else if constexpr (std::is_same_v<T, ForStmt>) {
            exec_for(s, n);
          } else if constexpr (std::is_same_v<T, ReturnStmt>) {
            ret_ = n.value ? eval(*n.value) : Eval{Value::integer(0), {}};
            ret_.l |= state_.control();
            return Flow::Return;
          } else if constexpr (std::is_same_v<T, SourceStmt>) {
            state_.mark_source(n.var, n.label);
          } else if constexpr (std::is_same_v<T, ExprStmt>) {
            eval(*n.expr);
          }
          return Flow::Normal;
        },
        s.node);
  }

  Flow exec_if(const Stmt& s, const IfStmt& n) {
    Eval c = eval(*n.cond);
    LabelSet full = c.l | state_.control();
    bool taken = c.v.truthy();
    auto& acc = branches_[{s.id, cur_path()}];
    acc.then_nonempty = !n.then_body.empty();
    acc.else_nonempty = !n.else_body.empty();
    (taken ? acc.taken_then : acc.taken_else)++;
    if (!full.empty()) {
      acc.tainted = true;
      acc.labels |= full;
    }
    const auto& untaken = taken ? static_.else_writes.at(s.id) : static_.then_writes.at(s.id);
    bool pushed = !c.l.empty();
    if (pushed) state_.enter_control(c.l);
    Flow f = exec_block(taken ? n.then_body : n.else_body);
    if (f == Flow::Return) return f;
    if (pushed) {
      state_.exit_control(untaken, opts_.implicit_flows);
    } else if (opts_.implicit_flows) {
      state_.taint_writes(untaken, full);
    }
    // A return in either arm makes the rest of the function control dependent on this branch.
    if (!full.empty() && static_.if_has_return.at(s.id)) state_.enter_control(full);
    return Flow::Normal;
  }

  LoopAcc& loop_sink(const Stmt& s, LabelSet full) {
    auto& acc = loops_[{s.id, cur_path()}];
    acc.labels |= full;
    ++acc.evaluations;
    acc.max_condition_labels = std::max(acc.max_condition_labels, full.size());
    return acc;
  }

  void check_guard(const Stmt& s, std::uint64_t trips) const {
    if (trips > opts_.max_trip_count)
      fail("loop " + std::to_string(s.id) + " exceeded the iteration guard of " +
           std::to_string(opts_.max_trip_count));
  }

  void exec_while(const Stmt& s, const WhileStmt& n) {
    std::uint64_t trips = 0;
    LabelSet last;
    for (;;) {
      Eval c = eval(*n.cond);
      last = c.l | state_.control();
      loop_sink(s, last);
      if (!c.v.truthy()) break;
      check_guard(s, ++trips);
      bool pushed = !c.l.empty();
      if (pushed) state_.enter_control(c.l);
      exec_block(n.body);
      if (pushed) state_.exit_control();
    }
    loops_[{s.id, cur_path()}].trips.add(trips);
    if (opts_.implicit_flows) state_.taint_writes(static_.body_writes.at(s.id), last);
  }

  void exec_for(const Stmt& s, const ForStmt& n) {
    Eval lo = eval(*n.lo);
    Eval hi = eval(*n.hi);
    Eval step = n.step ? eval(*n.step) : Eval{Value::integer(1), {}};
    double dir = scalar(step.v);
    if (dir == 0) fail("loop " + std::to_string(s.id) + " has a zero step");
    state_.assign(n.var, lo.v, lo.l);
    std::uint64_t trips = 0;
    LabelSet last;
    for (;;) {
      Slot* iv = state_.lookup(n.var);
      double i = scalar(iv->value);
      bool go = dir > 0 ? i < scalar(hi.v) : i > scalar(hi.v);
      LabelSet cond = iv->labels | hi.l | step.l;
      last = cond | state_.control();
      loop_sink(s, last);
      if (!go) break;
      check_guard(s, ++trips);
      bool pushed = !cond.empty();
      if (pushed) state_.enter_control(cond);
      exec_block(n.body);
      iv = state_.lookup(n.var);
      state_.assign(n.var, arith(BinaryOp::Add, iv->value, step.v), iv->labels | step.l);
      if (pushed) state_.exit_control();
    }
    loops_[{s.id, cur_path()}].trips.add(trips);
    if (opts_.implicit_flows) state_.taint_writes(static_.body_writes.at(s.id), last);
  }

  // ---- expressions

  double scalar(const Value& v) const {
    if (v.kind == Value::Kind::Array) fail("array used as a scalar");
    return v.as_real();
  }

  std::size_t index_of(const Value& v, std::size_t size) const {
    double d = scalar(v);
    if (d < 0 || d != std::floor(d) || d >= static_cast<double>(size))
      fail("array index " + std::to_string(d) + " out of range (size " + std::to_string(size) + ")");
    return static_cast<std::size_t>(d);
  }

  Value arith(BinaryOp op, const Value& a, const Value& b) const {
    bool ints = a.kind == Value::Kind::Int && b.kind == Value::Kind::Int;
    double x = scalar(a), y = scalar(b);
    switch (op) {
      case BinaryOp::Add: return ints ? Value::integer(a.i + b.i) : Value::real(x + y);
      case BinaryOp::Sub: return ints ? Value::integer(a.i - b.i) : Value::real(x - y);
      case BinaryOp::Mul: return ints ? Value::integer(a.i * b.i) : Value::real(x * y);
      case BinaryOp::Div:
        if (y == 0) fail("division by zero");
        return ints ? Value::integer(a.i / b.i) : Value::real(x / y);
      case BinaryOp::Mod:
        if (y == 0) fail("division by zero (modulo)");
        return ints ? Value::integer(a.i % b.i) : Value::real(std::fmod(x, y));
      case BinaryOp::Lt: return Value::integer(x < y);
      case BinaryOp::Le: return Value::integer(x <= y);
      case BinaryOp::Gt: return Value::integer(x > y);
      case BinaryOp::Ge: return Value::integer(x >= y);
      case BinaryOp::Eq: return Value::integer(x == y);
      case BinaryOp::Ne: return Value::integer(x != y);
      case BinaryOp::And:
      case BinaryOp::Or: break;
    }
    fail("unsupported operator");
  }

  Eval eval(const Expr& e) {
    return std::visit(
        [&](const auto& n) -> Eval {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, NumberLit>) {
            return {n.is_int ? Value::integer(static_cast<std::int64_t>(n.value)) : Value::real(n.value), {}};
          } else if constexpr (std::is_same_v<T, VarRef>) {
            const Slot* slot = state_.lookup(n.name);
            if (!slot) fail("unbound variable '" + n.name + "'");
            return {slot->value, slot->labels};
          } else if constexpr (std::is_same_v<T, Unary>) {
            Eval v = eval(*n.operand);
            if (n.op == UnaryOp::Not) return {Value::integer(!v.v.truthy()), v.l};
            if (v.v.kind == Value::Kind::Int) return {Value::integer(-v.v.i), v.l};
            return {Value::real(-scalar(v.v)), v.l};
          } else if constexpr (std::is_same_v<T, Binary>) {
            Eval a = eval(*n.lhs);
            if (n.op == BinaryOp::And || n.op == BinaryOp::Or) {
              bool lhs = a.v.truthy();
              if (n.op == BinaryOp::And ? !lhs : lhs) return {Value::integer(lhs), a.l};
              Eval b = eval(*n.rhs);
              return {Value::integer(b.v.truthy()), a.l | b.l};
            }
            Eval b = eval(*n.rhs);
            return {arith(n.op, a.v, b.v), a.l | b.l};
          } else if constexpr (std::is_same_v<T, IndexRead>) {
            Eval idx = eval(*n.index);
            const Slot* slot = state_.lookup(n.array);
            if (!slot || !slot->value.arr) fail("'" + n.array + "' is not an array");
            const auto& arr = *slot->value.arr;
            return {Value::number(arr.elems[index_of(idx.v, arr.elems.size())]), slot->labels | arr.labels | idx.l};
          } else if constexpr (std::is_same_v<T, Call>) {
            if (prog_.find_function(n.callee)) return call_user(e, n);
            return call_builtin(n);
          } else {
            return call_extern(e, n);
          }
        },
        e.node);
  }

  Eval call_builtin(const Call& c) {
    std::vector<Eval> args;
    args.reserve(c.args.size());
    LabelSet labels;
    for (const auto& a : c.args) {
      args.push_back(eval(*a));
      labels |= args.back().l;
    }
    const std::string& f = c.callee;
    if (f == "array") {
      double n = scalar(args[0].v);
      if (n < 0 || n != std::floor(n)) fail("array size must be a non-negative integer");
      auto arr = std::make_shared<ArrayData>();
      arr->elems.assign(static_cast<std::size_t>(n), 0.0);
      arr->labels = labels;
      Value v;
      v.kind = Value::Kind::Array;
      v.arr = std::move(arr);
      return {std::move(v), {}};
    }
    if (f == "len") {
      if (!args[0].v.arr) fail("len() of a non-array");
      return {Value::integer(static_cast<std::int64_t>(args[0].v.arr->elems.size())), labels | args[0].v.arr->labels};
    }
    double x = scalar(args[0].v);
    auto domain = [&](bool ok) {
      if (!ok) fail(f + "() argument out of domain: " + std::to_string(x));
    };
    if (f == "pow") return {Value::real(std::pow(x, scalar(args[1].v))), labels};
    if (f == "log") {
      domain(x > 0);
      return {Value::real(std::log(x)), labels};
    }
    if (f == "log2") {
      domain(x > 0);
      return {Value::real(std::log2(x)), labels};
    }
    if (f == "sqrt") {
      domain(x >= 0);
      return {Value::real(std::sqrt(x)), labels};
    }
    if (f == "floor") return {Value::integer(static_cast<std::int64_t>(std::floor(x))), labels};
    if (f == "ceil") return {Value::integer(static_cast<std::int64_t>(std::ceil(x))), labels};
    if (f == "abs") return {args[0].v.kind == Value::Kind::Int ? Value::integer(std::llabs(args[0].v.i)) : Value::real(std::fabs(x)), labels};
    if (f == "min" || f == "max") {
      bool pick_first = f == "min" ? x <= scalar(args[1].v) : x >= scalar(args[1].v);
      return {pick_first ? args[0].v : args[1].v, labels};
    }
    fail("unknown builtin '" + f + "'");
  }

  Eval call_user(const Expr& site, const Call& c) {
    const Function* fn = prog_.find_function(c.callee);
    std::vector<Eval> args;
    LabelSet all;
    for (const auto& a : c.args) {
      args.push_back(eval(*a));
      all |= args.back().l;
    }
    if (active_.count(fn->name)) {
      warn("recursive call to '" + fn->name + "' at call path [" + path_string(paths_[cur_path()]) + "." +
           std::to_string(site.id) + "] treated as opaque");
      return {Value::integer(0), all | state_.control()};
    }
    CallPath p = paths_[cur_path()];
    p.push_back(site.id);
    std::uint32_t pid = intern(p);
    auto& inv = invocations_[pid];
    inv.first = fn->name;
    ++inv.second;

    active_.insert(fn->name);
    state_.push_frame();
    frames_.push_back({fn, pid, state_.control_depth()});
    for (std::size_t i = 0; i < fn->params.size(); ++i) state_.assign(fn->params[i], args[i].v, args[i].l);
    Flow f = exec_block(fn->body);
    Eval result = f == Flow::Return ? ret_ : Eval{Value::integer(0), state_.control()};
    state_.truncate_control(frames_.back().control_base);
    frames_.pop_back();
    state_.pop_frame();
    active_.erase(fn->name);
    return result;
  }

  Eval call_extern(const Expr& site, const ExternCall& c) {
    const libdb::LibEntry* entry = db_.find(c.routine);
    if (!entry) fail("extern routine '" + c.routine + "' missing from the library database");
    std::vector<double> values;
    std::vector<LabelSet> labels;
    for (const auto& a : c.args) {
      Eval v = eval(*a);
      values.push_back(scalar(v.v));
      labels.push_back(v.l);
    }
    libdb::ExternEffect fx;
    try {
      fx = libdb::apply_extern(*entry, values, labels, state_.control(), state_.params(), values_);
    } catch (const libdb::LibDbError& ex) {
      fail(ex.what());
    }
    for (const auto& w : fx.writes) {
      const auto& arg = *c.args[static_cast<std::size_t>(w.arg - 1)];
      const auto* var = std::get_if<VarRef>(&arg.node);
      if (!var) fail(c.routine + ": argument " + std::to_string(w.arg) + " must be a variable");
      Slot* old = state_.lookup(var->name);
      LabelSet prior = old ? old->labels : LabelSet{};
      state_.assign(var->name, Value::number(w.value), w.labels | prior);
    }
    auto& acc = externs_[{site.id, cur_path()}];
    acc.routine = c.routine;
    acc.dependency |= fx.dependency;
    acc.has_dependency = acc.has_dependency || fx.has_dependency;
    acc.hint = fx.hint;
    ++acc.calls;
    return {Value::number(fx.return_value), fx.return_labels};
  }

  void warn(const std::string& msg) {
    if (std::find(warnings_.begin(), warnings_.end(), msg) == warnings_.end()) warnings_.push_back(msg);
  }

  TraceReport report() const {
    TraceReport t;
    t.config = values_;
    t.implicit_flows = opts_.implicit_flows;
    t.params = state_.params().all();
    const auto& names = state_.params();
    for (const auto& [k, a] : loops_)
      t.loops[{k.first, paths_[k.second]}] = {names.names(a.labels), a.trips, a.evaluations, a.max_condition_labels};
    for (const auto& [k, b] : branches_) {
      if (!b.tainted) continue;
      t.branches[{k.first, paths_[k.second]}] = {names.names(b.labels), b.taken_then, b.taken_else, b.then_nonempty,
                                                  b.else_nonempty};
    }
    for (const auto& [k, x] : externs_)
      t.externs[{k.first, paths_[k.second]}] = {x.routine, names.names(x.dependency), x.has_dependency, x.hint,
                                                 x.calls};
    for (const auto& [k, n] : stmt_counts_) t.statements[{k.first, paths_[k.second]}] = n;
    for (const auto& [pid, inv] : invocations_) t.invocations[paths_[pid]] = inv;
    t.warnings = warnings_;
    return t;
  }

  const Program& prog_;
  const ParamValues& values_;
  const libdb::LibraryDB& db_;
  RunOptions opts_;
  TaintState state_;
  StaticInfo static_;

  std::vector<Frame> frames_;
  std::set<std::string> active_;
  Eval ret_;
  std::vector<CallPath> paths_;
  std::map<CallPath, std::uint32_t> path_ids_;

  std::map<AccKey, LoopAcc> loops_;
  std::map<AccKey, BranchAcc> branches_;
  std::map<AccKey, ExternAcc> externs_;
  std::map<AccKey, std::uint64_t> stmt_counts_;
  std::map<std::uint32_t, std::pair<std::string, std::uint64_t>> invocations_;
  std::vector<std::string> warnings_;
};

}  // namespace

TraceReport run(const Program& program, const ParamValues& param_values, const libdb::LibraryDB& db,
                const RunOptions& opts) {
  auto report = validate(program, &db);
  if (!report.ok()) {
    const auto& e = report.errors.front();
    throw std::invalid_argument("program failed validation: " + std::to_string(e.pos.line) + ":" +
                                std::to_string(e.pos.column) + ": " + e.message);
  }
  return Interpreter(program, param_values, db, opts).run();
}

TraceReport merge(const std::vector<TraceReport>& traces) {
  TraceReport out;
  if (traces.empty()) return out;
  out.config = traces.front().config;
  out.implicit_flows = traces.front().implicit_flows;
  std::set<std::string> params;
  for (const auto& t : traces) {
    if (t.config != out.config) out.config.clear();
    for (const auto& p : t.params)
      if (params.insert(p).second) out.params.push_back(p);
    for (const auto& [k, l] : t.loops) {
      auto& m = out.loops[k];
      m.labels.insert(l.labels.begin(), l.labels.end());
      m.trips.merge(l.trips);
      m.evaluations += l.evaluations;
      m.max_condition_labels = std::max(m.max_condition_labels, l.max_condition_labels);
    }
    for (const auto& [k, b] : t.branches) {
      auto& m = out.branches[k];
      m.labels.insert(b.labels.begin(), b.labels.end());
      m.taken_then += b.taken_then;
      m.taken_else += b.taken_else;
      m.then_nonempty = b.then_nonempty;
      m.else_nonempty = b.else_nonempty;
    }
    for (const auto& [k, x] : t.externs) {
      auto& m = out.externs[k];
      m.routine = x.routine;
      m.dependency.insert(x.dependency.begin(), x.dependency.end());
      m.has_dependency = m.has_dependency || x.has_dependency;
      m.hint = x.hint;
      m.calls += x.calls;
    }
    for (const auto& [k, n] : t.statements) out.statements[k] += n;
    for (const auto& [p, inv] : t.invocations) {
      auto& m = out.invocations[p];
      m.first = inv.first;
      m.second += inv.second;
    }
    for (const auto& w : t.warnings)
      if (std::find(out.warnings.begin(), out.warnings.end(), w) == out.warnings.end()) out.warnings.push_back(w);
  }
  return out;
}

std::map<SiteKey, ParamSet> perturbation_oracle(const Program& program, const ParamValues& base,
                                                const libdb::LibraryDB& db, const std::vector<double>& deltas,
                                                const RunOptions& opts) {
  TraceReport ref = run(program, base, db, opts);
  std::map<SiteKey, ParamSet> out;
  for (const auto& [k, l] : ref.loops) out[k];
  for (const auto& decl : program.param_decls) {
    auto it = base.find(decl.name);
    if (it == base.end()) continue;
    for (double d : deltas) {
      ParamValues cfg = base;
      cfg[decl.name] = it->second * d;
      TraceReport t = run(program, cfg, db, opts);
      std::set<SiteKey> keys;
      for (const auto& [k, l] : ref.loops) keys.insert(k);
      for (const auto& [k, l] : t.loops) keys.insert(k);
      for (const auto& k : keys) {
        auto a = ref.loops.find(k);
        auto b = t.loops.find(k);
        TripStats sa = a == ref.loops.end() ? TripStats{} : a->second.trips;
        TripStats sb = b == t.loops.end() ? TripStats{} : b->second.trips;
        if (!(sa == sb)) out[k].insert(decl.name);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {
using nlohmann::json;

json site_json(const SiteKey& k) { return json{{"id", k.node}, {"call_path", k.path}}; }

SiteKey site_from(const json& j) { return {j.at("id").get<NodeId>(), j.at("call_path").get<CallPath>()}; }

json trips_json(const TripStats& s) {
  return json{{"entries", s.entries}, {"total", s.total}, {"min", s.min}, {"max", s.max}, {"hash", s.hash}};
}
}  // namespace

std::string to_json(const TraceReport& t) {
  json j{{"schema_version", 1}, {"kind", "trace"}, {"config", t.config}, {"implicit_flows", t.implicit_flows},
         {"params", t.params}};
  j["loops"] = json::array();
  for (const auto& [k, l] : t.loops) {
    json r = site_json(k);
    r["labels"] = l.labels;
    r["evaluations"] = l.evaluations;
    r["max_condition_labels"] = l.max_condition_labels;
    r["trips"] = trips_json(l.trips);
    j["loops"].push_back(std::move(r));
  }
  j["branches"] = json::array();
  for (const auto& [k, b] : t.branches) {
    json r = site_json(k);
    r["labels"] = b.labels;
    r["taken_then"] = b.taken_then;
    r["taken_else"] = b.taken_else;
    r["then_nonempty"] = b.then_nonempty;
    r["else_nonempty"] = b.else_nonempty;
    j["branches"].push_back(std::move(r));
  }
  j["unvisited_tainted_branches"] = json::array();
  for (const auto& u : t.unvisited_tainted_branches()) {
    json r = site_json(u.site);
    r["arm"] = u.arm;
    r["labels"] = u.labels;
    j["unvisited_tainted_branches"].push_back(std::move(r));
  }
  j["externs"] = json::array();
  for (const auto& [k, x] : t.externs) {
    json r = site_json(k);
    r["routine"] = x.routine;
    r["dependency"] = x.dependency;
    r["has_dependency"] = x.has_dependency;
    r["hint"] = x.hint ? json(*x.hint) : json(nullptr);
    r["calls"] = x.calls;
    j["externs"].push_back(std::move(r));
  }
  j["statements"] = json::array();
  for (const auto& [k, n] : t.statements) {
    json r = site_json(k);
    r["count"] = n;
    j["statements"].push_back(std::move(r));
  }
  j["invocations"] = json::array();
  for (const auto& [p, inv] : t.invocations)
    j["invocations"].push_back(json{{"function", inv.first}, {"call_path", p}, {"count", inv.second}});
  j["warnings"] = t.warnings;
  return j.dump(2) + "\n";
}

TraceReport trace_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("kind", "") != "trace") throw std::invalid_argument("not a trace report (missing kind=trace)");
  TraceReport t;
  t.config = j.at("config").get<ParamValues>();
  t.implicit_flows = j.at("implicit_flows").get<bool>();
  t.params = j.at("params").get<std::vector<std::string>>();
  for (const auto& r : j.at("loops")) {
    LoopRecord l;
    l.labels = r.at("labels").get<ParamSet>();
    l.evaluations = r.at("evaluations").get<std::uint64_t>();
    l.max_condition_labels = r.at("max_condition_labels").get<std::size_t>();
    const auto& s = r.at("trips");
    l.trips = {s.at("entries").get<std::uint64_t>(), s.at("total").get<std::uint64_t>(),
               s.at("min").get<std::uint64_t>(), s.at("max").get<std::uint64_t>(), s.at("hash").get<std::uint64_t>()};
    t.loops[site_from(r)] = std::move(l);
  }
  for (const auto& r : j.at("branches"))
    t.branches[site_from(r)] = {r.at("labels").get<ParamSet>(), r.at("taken_then").get<std::uint64_t>(),
                                r.at("taken_else").get<std::uint64_t>(), r.at("then_nonempty").get<bool>(),
                                r.at("else_nonempty").get<bool>()};
  for (const auto& r : j.at("externs")) {
    ExternRecord x;
    x.routine = r.at("routine").get<std::string>();
    x.dependency = r.at("dependency").get<ParamSet>();
    x.has_dependency = r.at("has_dependency").get<bool>();
    if (!r.at("hint").is_null()) x.hint = r.at("hint").get<std::string>();
    x.calls = r.at("calls").get<std::uint64_t>();
    t.externs[site_from(r)] = std::move(x);
  }
  for (const auto& r : j.at("statements")) t.statements[site_from(r)] = r.at("count").get<std::uint64_t>();
  for (const auto& r : j.at("invocations"))
    t.invocations[r.at("call_path").get<CallPath>()] = {r.at("function").get<std::string>(),
                                                        r.at("count").get<std::uint64_t>()};
  t.warnings = j.at("warnings").get<std::vector<std::string>>();
  return t;
}

}  // namespace taintperf::taint
