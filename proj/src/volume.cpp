#include "taintperf/volume.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "taintperf/util.hpp"
#include "taintperf/validate.hpp"

namespace taintperf::volume {

using namespace dsl;
using taint::TraceReport;

// ---------------------------------------------------------------------------
// VolumeExpr

VolumeExpr VolumeExpr::constant(double v) {
  VolumeExpr e;
  e.kind = Kind::Const;
  e.value = v;
  return e;
}

VolumeExpr VolumeExpr::unresolved(Atom atom, NodeId site, CallPath path, ParamSet params) {
  VolumeExpr e;
  e.kind = Kind::Unresolved;
  e.atom = atom;
  e.site = site;
  e.path = std::move(path);
  e.params = std::move(params);
  return e;
}

VolumeExpr VolumeExpr::sum(std::vector<VolumeExpr> children) {
  VolumeExpr e;
  e.kind = Kind::Sum;
  e.children = std::move(children);
  return e;
}

VolumeExpr VolumeExpr::product(std::vector<VolumeExpr> children) {
  VolumeExpr e;
  e.kind = Kind::Product;
  e.children = std::move(children);
  return e;
}

VolumeExpr normalize(VolumeExpr e) {
  if (e.kind == VolumeExpr::Kind::Const || e.kind == VolumeExpr::Kind::Unresolved) return e;
  const bool is_sum = e.kind == VolumeExpr::Kind::Sum;
  const double neutral = is_sum ? 0.0 : 1.0;
  double folded = neutral;
  std::vector<VolumeExpr> kept;
  auto absorb = [&](VolumeExpr c) {
    if (c.kind == VolumeExpr::Kind::Const) {
      folded = is_sum ? folded + c.value : folded * c.value;
    } else {
      kept.push_back(std::move(c));
    }
  };
  for (auto& raw : e.children) {
    VolumeExpr c = normalize(std::move(raw));
    if (c.kind == e.kind) {
      for (auto& g : c.children) absorb(std::move(g));
    } else {
      absorb(std::move(c));
    }
  }
  if (!is_sum && folded == 0) return VolumeExpr::constant(0);
  if (folded != neutral) {
    if (is_sum)
      kept.push_back(VolumeExpr::constant(folded));
    else
      kept.insert(kept.begin(), VolumeExpr::constant(folded));
  }
  if (kept.empty()) return VolumeExpr::constant(folded);
  if (kept.size() == 1) return std::move(kept.front());
  e.children = std::move(kept);
  return e;
}

ParamSet params_of(const VolumeExpr& e) {
  ParamSet out = e.params;
  for (const auto& c : e.children) {
    auto p = params_of(c);
    out.insert(p.begin(), p.end());
  }
  return out;
}

std::string to_string(const VolumeExpr& e) {
  switch (e.kind) {
    case VolumeExpr::Kind::Const: return format_number(e.value);
    case VolumeExpr::Kind::Unresolved: {
      static const char* prefix[] = {"loop", "if", "ext"};
      std::string s = prefix[static_cast<int>(e.atom)] + std::to_string(e.site);
      if (!e.path.empty()) s += "@" + taint::path_string(e.path);
      return s + "(" + join(e.params) + ")";
    }
    case VolumeExpr::Kind::Sum:
    case VolumeExpr::Kind::Product: break;
  }
  const bool is_sum = e.kind == VolumeExpr::Kind::Sum;
  std::string s;
  for (std::size_t i = 0; i < e.children.size(); ++i) {
    if (i) s += is_sum ? " + " : " * ";
    const auto& c = e.children[i];
    bool paren = !is_sum && c.kind == VolumeExpr::Kind::Sum;
    s += paren ? "(" + to_string(c) + ")" : to_string(c);
  }
  return s;
}

double evaluate(const VolumeExpr& e, const std::function<double(const VolumeExpr&)>& leaf) {
  switch (e.kind) {
    case VolumeExpr::Kind::Const: return e.value;
    case VolumeExpr::Kind::Unresolved: return leaf(e);
    case VolumeExpr::Kind::Sum: {
      double s = 0;
      for (const auto& c : e.children) s += evaluate(c, leaf);
      return s;
    }
    case VolumeExpr::Kind::Product: {
      double p = 1;
      for (const auto& c : e.children) p *= evaluate(c, leaf);
      return p;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Tree construction

namespace {

enum class NodeKind { Stmt, Loop, If, Call, Extern, Other };

class Builder {
public:
  Builder(const Program& prog, const TraceReport& trace, bool inline_calls)
      : prog_(prog), trace_(trace), inline_(inline_calls), vr_(validate(prog, nullptr)) {
    for (const auto& fn : prog.functions)
      walk(
          fn.body,
          [&](const Stmt& s) {
            bool loop = std::holds_alternative<WhileStmt>(s.node) || std::holds_alternative<ForStmt>(s.node);
            kinds_[s.id] = loop ? NodeKind::Loop : std::holds_alternative<IfStmt>(s.node) ? NodeKind::If : NodeKind::Stmt;
          },
          [&](const Expr& e) {
            kinds_[e.id] = std::holds_alternative<Call>(e.node)         ? NodeKind::Call
                           : std::holds_alternative<ExternCall>(e.node) ? NodeKind::Extern
                                                                        : NodeKind::Other;
          });
    check_trace();
  }

  LoopNestTree build(const Function& fn, const CallPath& path) {
    LoopNestTree tree;
    tree.function = fn.name;
    tree.path = path;
    tree.inlined = inline_;
    auto inv = trace_.invocations.find(path);
    tree.invocations = inv == trace_.invocations.end() ? 0 : inv->second.second;
    Out out;
    block(fn.body, path, 0, out, tree.loop_leaves);
    tree.children = std::move(out.nodes);
    return tree;
  }

private:
  struct Out {
    std::vector<LoopNestNode> nodes;
    bool direct = false;
  };

  void expect(NodeId id, NodeKind kind, const char* what) const {
    auto it = kinds_.find(id);
    if (it == kinds_.end() || it->second != kind)
      throw std::invalid_argument(std::string("trace refers to ") + what + " " + std::to_string(id) +
                                  " which does not exist in the program");
  }

  void check_trace() const {
    for (const auto& [k, r] : trace_.loops) expect(k.node, NodeKind::Loop, "loop");
    for (const auto& [k, r] : trace_.branches) expect(k.node, NodeKind::If, "branch");
    for (const auto& [k, r] : trace_.externs) expect(k.node, NodeKind::Extern, "extern call");
    for (const auto& [k, r] : trace_.statements)
      if (!kinds_.count(k.node) || kinds_.at(k.node) == NodeKind::Call || kinds_.at(k.node) == NodeKind::Extern ||
          kinds_.at(k.node) == NodeKind::Other)
        throw std::invalid_argument("trace refers to statement " + std::to_string(k.node) +
                                    " which does not exist in the program");
    for (const auto& [path, inv] : trace_.invocations) {
      for (NodeId id : path) expect(id, NodeKind::Call, "call site");
      if (!prog_.find_function(inv.first))
        throw std::invalid_argument("trace refers to unknown function '" + inv.first + "'");
    }
  }

  void exprs(const Expr& root, const CallPath& path, int depth, Out& out, std::vector<SiteKey>& leaves) {
    walk_expr(root, [&](const Expr& e) {
      if (const auto* c = std::get_if<Call>(&e.node)) {
        const Function* fn = prog_.find_function(c->callee);
        if (!fn || !inline_) return;
        CallPath sub = path;
        sub.push_back(e.id);
        if (!trace_.invocations.count(sub)) return;
        block(fn->body, sub, depth, out, leaves);
      } else if (const auto* x = std::get_if<ExternCall>(&e.node)) {
        auto it = trace_.externs.find({e.id, path});
        if (it == trace_.externs.end() || !it->second.has_dependency) return;
        LoopNestNode n;
        n.kind = LoopNestNode::Kind::Extern;
        n.site = e.id;
        n.path = path;
        n.labels = it->second.dependency;
        n.routine = x->routine;
        n.hint = it->second.hint;
        out.nodes.push_back(std::move(n));
      }
    });
  }

  void block(const Block& b, const CallPath& path, int depth, Out& out, std::vector<SiteKey>& leaves) {
    for (const auto& s : b) {
      if (trace_.statement_count({s.id, path}) == 0) continue;
      std::visit(
          [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, IfStmt>) {
              exprs(*n.cond, path, depth, out, leaves);
              Out then_out, else_out;
              block(n.then_body, path, depth, then_out, leaves);
              block(n.else_body, path, depth, else_out, leaves);
              out.direct = out.direct || then_out.direct || else_out.direct;
              auto br = trace_.branches.find({s.id, path});
              bool guarded = br != trace_.branches.end() && !br->second.labels.empty() &&
                             (!then_out.nodes.empty() || !else_out.nodes.empty());
              if (guarded) {
                LoopNestNode g;
                g.kind = LoopNestNode::Kind::Guard;
                g.site = s.id;
                g.path = path;
                g.labels = br->second.labels;
                g.children = std::move(then_out.nodes);
                g.else_children = std::move(else_out.nodes);
                out.nodes.push_back(std::move(g));
              } else {
                for (auto& x : then_out.nodes) out.nodes.push_back(std::move(x));
                for (auto& x : else_out.nodes) out.nodes.push_back(std::move(x));
              }
            } else if constexpr (std::is_same_v<T, WhileStmt> || std::is_same_v<T, ForStmt>) {
              Out body;
              if constexpr (std::is_same_v<T, ForStmt>) {
                exprs(*n.lo, path, depth, out, leaves);
                exprs(*n.hi, path, depth, out, leaves);
                if (n.step) exprs(*n.step, path, depth, out, leaves);
              } else {
                exprs(*n.cond, path, depth + 1, body, leaves);
              }
              block(n.body, path, depth + 1, body, leaves);
              LoopNestNode l;
              l.kind = LoopNestNode::Kind::Loop;
              l.site = s.id;
              l.path = path;
              auto rec = trace_.loops.find({s.id, path});
              if (rec != trace_.loops.end()) l.labels = rec->second.labels;
              if (const auto* c = vr_.constant_loop(s.id)) l.constant_trips = c->trip_count;
              l.direct_work = body.direct;
              l.children = std::move(body.nodes);
              out.nodes.push_back(std::move(l));
            } else {
              out.direct = true;
              if (depth > 0) leaves.push_back({s.id, path});
              if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
                exprs(*n.value, path, depth, out, leaves);
              } else if constexpr (std::is_same_v<T, IndexAssignStmt>) {
                exprs(*n.index, path, depth, out, leaves);
                exprs(*n.value, path, depth, out, leaves);
              } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                if (n.value) exprs(*n.value, path, depth, out, leaves);
              } else if constexpr (std::is_same_v<T, ExprStmt>) {
                exprs(*n.expr, path, depth, out, leaves);
              }
            }
          },
          s.node);
    }
  }

  const Program& prog_;
  const TraceReport& trace_;
  bool inline_;
  ValidationReport vr_;
  std::unordered_map<NodeId, NodeKind> kinds_;
};

VolumeExpr node_volume(const LoopNestNode& n);

VolumeExpr seq_volume(const std::vector<LoopNestNode>& nodes) {
  std::vector<VolumeExpr> parts;
  for (const auto& n : nodes) parts.push_back(node_volume(n));
  return VolumeExpr::sum(std::move(parts));
}

VolumeExpr node_volume(const LoopNestNode& n) {
  switch (n.kind) {
    case LoopNestNode::Kind::Loop: {
      VolumeExpr factor = n.constant_trips
                              ? VolumeExpr::constant(static_cast<double>(*n.constant_trips))
                              : VolumeExpr::unresolved(VolumeExpr::Atom::Loop, n.site, n.path, n.labels);
      VolumeExpr body = seq_volume(n.children);
      if (n.direct_work || n.children.empty()) body.children.push_back(VolumeExpr::constant(1));
      return VolumeExpr::product({std::move(factor), std::move(body)});
    }
    case LoopNestNode::Kind::Guard:
      return VolumeExpr::product({VolumeExpr::unresolved(VolumeExpr::Atom::Guard, n.site, n.path, n.labels),
                                  VolumeExpr::sum({seq_volume(n.children), seq_volume(n.else_children)})});
    case LoopNestNode::Kind::Extern:
      return VolumeExpr::unresolved(VolumeExpr::Atom::Extern, n.site, n.path, n.labels);
  }
  return VolumeExpr::constant(0);
}

}  // namespace

std::vector<LoopNestTree> build_loop_nests(const Program& program, const TraceReport& trace, bool inline_calls) {
  Builder b(program, trace, inline_calls);
  std::vector<LoopNestTree> out;
  for (const auto& [path, inv] : trace.invocations) out.push_back(b.build(*program.find_function(inv.first), path));
  std::sort(out.begin(), out.end(), [](const LoopNestTree& a, const LoopNestTree& b) {
    return std::tie(a.function, a.path) < std::tie(b.function, b.path);
  });
  return out;
}

VolumeExpr compose_volume(const LoopNestTree& tree) { return normalize(seq_volume(tree.children)); }

// ---------------------------------------------------------------------------
// Classification

ParamSet Structure::params() const {
  ParamSet out;
  for (const auto& g : additive) out.insert(g.begin(), g.end());
  for (const auto& g : multiplicative) out.insert(g.begin(), g.end());
  return out;
}

namespace {

using Monomials = std::vector<ParamSet>;

Monomials maximal(Monomials ms) {
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  Monomials out;
  for (const auto& m : ms) {
    bool dominated = std::any_of(ms.begin(), ms.end(), [&](const ParamSet& o) {
      return o.size() > m.size() && std::includes(o.begin(), o.end(), m.begin(), m.end());
    });
    if (!dominated) out.push_back(m);
  }
  return out;
}

Monomials monomials(const VolumeExpr& e) {
  switch (e.kind) {
    case VolumeExpr::Kind::Const: return {ParamSet{}};
    case VolumeExpr::Kind::Unresolved: return {e.params};
    case VolumeExpr::Kind::Sum: {
      Monomials out;
      for (const auto& c : e.children) {
        auto m = monomials(c);
        out.insert(out.end(), m.begin(), m.end());
      }
      return maximal(std::move(out));
    }
    case VolumeExpr::Kind::Product: {
      Monomials acc{ParamSet{}};
      for (const auto& c : e.children) {
        Monomials next;
        for (const auto& a : acc)
          for (const auto& b : monomials(c)) {
            ParamSet u = a;
            u.insert(b.begin(), b.end());
            next.push_back(std::move(u));
          }
        acc = maximal(std::move(next));
      }
      return acc;
    }
  }
  return {};
}

// A loop whose condition introduces two or more parameters not already contributed by the
// factors enclosing it cannot be split into per-parameter loops.
bool over_approx(const VolumeExpr& e, const ParamSet& enclosing) {
  switch (e.kind) {
    case VolumeExpr::Kind::Const: return false;
    case VolumeExpr::Kind::Unresolved: {
      if (e.atom != VolumeExpr::Atom::Loop) return false;
      std::size_t fresh = 0;
      for (const auto& p : e.params) fresh += enclosing.count(p) ? 0 : 1;
      return fresh >= 2;
    }
    case VolumeExpr::Kind::Sum:
      return std::any_of(e.children.begin(), e.children.end(),
                         [&](const VolumeExpr& c) { return over_approx(c, enclosing); });
    case VolumeExpr::Kind::Product: {
      ParamSet ctx = enclosing;
      for (const auto& c : e.children) {
        if (over_approx(c, ctx)) return true;
        if (c.kind == VolumeExpr::Kind::Unresolved) ctx.insert(c.params.begin(), c.params.end());
      }
      return false;
    }
  }
  return false;
}

}  // namespace

Structure classify_dependencies(const VolumeExpr& vol) {
  Structure s;
  for (auto& m : monomials(vol)) {
    if (m.size() >= 2)
      s.multiplicative.push_back(std::move(m));
    else if (m.size() == 1)
      s.additive.push_back(std::move(m));
  }
  s.over_approx = over_approx(vol, {});
  return s;
}

BoundCheck upper_bound_check(const LoopNestTree& tree, const VolumeExpr& vol, const TraceReport& trace) {
  BoundCheck out;
  out.bound = evaluate(vol, [&](const VolumeExpr& leaf) -> double {
    if (leaf.atom != VolumeExpr::Atom::Loop) return 1.0;
    auto it = trace.loops.find({leaf.site, leaf.path});
    if (it == trace.loops.end())
      throw std::invalid_argument("no trip count recorded for loop " + std::to_string(leaf.site) + " at [" +
                                  taint::path_string(leaf.path) + "]");
    return static_cast<double>(it->second.trips.max);
  });
  if (tree.invocations == 0) return out;
  for (const auto& leaf : tree.loop_leaves) {
    double per_call = static_cast<double>(trace.statement_count(leaf)) / static_cast<double>(tree.invocations);
    if (per_call > out.worst_count) {
      out.worst_count = per_call;
      out.worst_leaf = leaf;
    }
  }
  out.ok = out.bound + 1e-9 >= out.worst_count;
  return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::size_t count_dynamic_loops(const std::vector<LoopNestNode>& nodes) {
  std::size_t n = 0;
  for (const auto& x : nodes) {
    if (x.kind == LoopNestNode::Kind::Loop && !x.constant_trips) ++n;
    n += count_dynamic_loops(x.children) + count_dynamic_loops(x.else_children);
  }
  return n;
}

bool has_extern(const std::vector<LoopNestNode>& nodes) {
  return std::any_of(nodes.begin(), nodes.end(), [](const LoopNestNode& x) {
    return x.kind == LoopNestNode::Kind::Extern || has_extern(x.children) || has_extern(x.else_children);
  });
}

void collect_hints(const std::vector<LoopNestNode>& nodes, std::vector<ExternHint>& out) {
  for (const auto& x : nodes) {
    if (x.kind == LoopNestNode::Kind::Extern && x.hint) {
      ExternHint h{x.routine, *x.hint};
      if (std::none_of(out.begin(), out.end(),
                       [&](const ExternHint& o) { return o.routine == h.routine && o.hint == h.hint; }))
        out.push_back(h);
    }
    collect_hints(x.children, out);
    collect_hints(x.else_children, out);
  }
}

void loop_params(const VolumeExpr& e, ParamSet& out) {
  if (e.kind == VolumeExpr::Kind::Unresolved && e.atom == VolumeExpr::Atom::Loop) out.insert(e.params.begin(), e.params.end());
  for (const auto& c : e.children) loop_params(c, out);
}

bool has_prefix(const CallPath& path, const CallPath& prefix) {
  return path.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), path.begin());
}

}  // namespace

const DependencyRecord* DependencyReport::find(const std::string& function, const CallPath& path) const {
  for (const auto& r : records)
    if (r.function == function && r.path == path) return &r;
  return nullptr;
}

ParamSet DependencyReport::function_params(const std::string& function) const {
  ParamSet out;
  for (const auto& r : records)
    if (r.function == function) out.insert(r.dep_params.begin(), r.dep_params.end());
  return out;
}

DependencyReport analyze(const Program& program, const TraceReport& trace) {
  DependencyReport rep;
  rep.params = trace.params;
  rep.warnings = trace.warnings;
  auto inclusive = build_loop_nests(program, trace, true);
  auto own = build_loop_nests(program, trace, false);
  auto unvisited = trace.unvisited_tainted_branches();
  for (std::size_t i = 0; i < inclusive.size(); ++i) {
    const auto& t = inclusive[i];
    DependencyRecord r;
    r.function = t.function;
    r.path = t.path;
    r.invocations = t.invocations;
    r.volume = compose_volume(t);
    r.volume_text = to_string(r.volume);
    r.dep_params = params_of(r.volume);
    r.structure = classify_dependencies(r.volume);
    VolumeExpr own_vol = compose_volume(own[i]);
    r.own_params = params_of(own_vol);
    loop_params(own_vol, r.own_loop_params);
    r.own_dynamic_loops = count_dynamic_loops(own[i].children);
    r.own_extern_dependency = has_extern(own[i].children);
    collect_hints(t.children, r.extern_hints);
    for (const auto& u : unvisited)
      if (has_prefix(u.site.path, t.path)) r.unvisited_branches.push_back(u);
    rep.records.push_back(std::move(r));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// JSON

namespace {
using nlohmann::json;

json expr_json(const VolumeExpr& e) {
  static const char* kinds[] = {"const", "unresolved", "sum", "product"};
  static const char* atoms[] = {"loop", "guard", "extern"};
  json j{{"kind", kinds[static_cast<int>(e.kind)]}};
  if (e.kind == VolumeExpr::Kind::Const) j["value"] = e.value;
  if (e.kind == VolumeExpr::Kind::Unresolved) {
    j["atom"] = atoms[static_cast<int>(e.atom)];
    j["site"] = e.site;
    j["call_path"] = e.path;
    j["params"] = e.params;
  }
  if (!e.children.empty()) {
    j["children"] = json::array();
    for (const auto& c : e.children) j["children"].push_back(expr_json(c));
  }
  return j;
}

VolumeExpr expr_from(const json& j) {
  VolumeExpr e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "const") return VolumeExpr::constant(j.at("value").get<double>());
  if (kind == "unresolved") {
    const auto atom = j.at("atom").get<std::string>();
    auto a = atom == "loop" ? VolumeExpr::Atom::Loop : atom == "guard" ? VolumeExpr::Atom::Guard : VolumeExpr::Atom::Extern;
    return VolumeExpr::unresolved(a, j.at("site").get<NodeId>(), j.at("call_path").get<CallPath>(),
                                  j.at("params").get<ParamSet>());
  }
  std::vector<VolumeExpr> children;
  for (const auto& c : j.value("children", json::array())) children.push_back(expr_from(c));
  if (kind == "sum") return VolumeExpr::sum(std::move(children));
  if (kind == "product") return VolumeExpr::product(std::move(children));
  throw std::invalid_argument("unknown volume node kind '" + kind + "'");
}
}  // namespace

std::string to_json(const DependencyReport& report) {
  json j{{"schema_version", 1}, {"kind", "dependencies"}, {"params", report.params}, {"warnings", report.warnings}};
  j["records"] = json::array();
  for (const auto& r : report.records) {
    json u = json::array();
    for (const auto& b : r.unvisited_branches)
      u.push_back({{"id", b.site.node}, {"call_path", b.site.path}, {"arm", b.arm}, {"labels", b.labels}});
    json h = json::array();
    for (const auto& x : r.extern_hints) h.push_back({{"routine", x.routine}, {"hint", x.hint}});
    j["records"].push_back({{"function", r.function},
                            {"call_path", r.path},
                            {"invocations", r.invocations},
                            {"dep_params", r.dep_params},
                            {"own_params", r.own_params},
                            {"own_loop_params", r.own_loop_params},
                            {"additive", r.structure.additive},
                            {"multiplicative", r.structure.multiplicative},
                            {"over_approx", r.structure.over_approx},
                            {"unvisited_branches", u},
                            {"extern_hints", h},
                            {"own_dynamic_loops", r.own_dynamic_loops},
                            {"own_extern_dependency", r.own_extern_dependency},
                            {"volume", r.volume_text},
                            {"volume_tree", expr_json(r.volume)}});
  }
  return j.dump(2) + "\n";
}

DependencyReport deps_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("kind", "") != "dependencies") throw std::invalid_argument("not a dependency report (missing kind=dependencies)");
  DependencyReport rep;
  rep.params = j.at("params").get<std::vector<std::string>>();
  rep.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& x : j.at("records")) {
    DependencyRecord r;
    r.function = x.at("function").get<std::string>();
    r.path = x.at("call_path").get<CallPath>();
    r.invocations = x.value("invocations", std::uint64_t{0});
    r.dep_params = x.at("dep_params").get<ParamSet>();
    r.own_params = x.value("own_params", r.dep_params);
    r.own_loop_params = x.value("own_loop_params", ParamSet{});
    r.structure.additive = x.at("additive").get<std::vector<ParamSet>>();
    r.structure.multiplicative = x.at("multiplicative").get<std::vector<ParamSet>>();
    r.structure.over_approx = x.value("over_approx", false);
    for (const auto& b : x.value("unvisited_branches", json::array()))
      r.unvisited_branches.push_back({{b.at("id").get<NodeId>(), b.at("call_path").get<CallPath>()},
                                      b.at("arm").get<std::string>(),
                                      b.at("labels").get<ParamSet>()});
    for (const auto& h : x.value("extern_hints", json::array()))
      r.extern_hints.push_back({h.at("routine").get<std::string>(), h.at("hint").get<std::string>()});
    r.own_dynamic_loops = x.value("own_dynamic_loops", std::size_t{0});
    r.own_extern_dependency = x.value("own_extern_dependency", false);
    if (x.contains("volume_tree")) r.volume = expr_from(x.at("volume_tree"));
    r.volume_text = x.value("volume", to_string(r.volume));
    rep.records.push_back(std::move(r));
  }
  return rep;
}

}  // namespace taintperf::volume
