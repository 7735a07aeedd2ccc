#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "taintperf/ast.hpp"
#include "taintperf/labels.hpp"
#include "taintperf/taint.hpp"

namespace taintperf::volume {

using taint::CallPath;
using taint::SiteKey;

// ---------------------------------------------------------------------------
// Symbolic compute volume

struct VolumeExpr {
  enum class Kind { Const, Unresolved, Sum, Product };
  // What an Unresolved leaf stands for: a loop trip count, a tainted branch guard, or a library call.
  enum class Atom { Loop, Guard, Extern };

  Kind kind = Kind::Const;
  double value = 0;
  Atom atom = Atom::Loop;
  dsl::NodeId site = 0;
  CallPath path;
  ParamSet params;
  std::vector<VolumeExpr> children;

  static VolumeExpr constant(double v);
  static VolumeExpr unresolved(Atom atom, dsl::NodeId site, CallPath path, ParamSet params);
  static VolumeExpr sum(std::vector<VolumeExpr> children);
  static VolumeExpr product(std::vector<VolumeExpr> children);

  friend bool operator==(const VolumeExpr&, const VolumeExpr&) = default;
};

/// Flattens nested sums/products, folds constants, drops neutral elements and collapses
/// single-child nodes. Child order is preserved apart from the folded constant (last in a sum,
/// first in a product).
VolumeExpr normalize(VolumeExpr e);
ParamSet params_of(const VolumeExpr& e);
std::string to_string(const VolumeExpr& e);
/// Evaluates with `leaf` supplying the value of every Unresolved node.
double evaluate(const VolumeExpr& e, const std::function<double(const VolumeExpr&)>& leaf);

// ---------------------------------------------------------------------------
// Loop-nest trees

struct LoopNestNode {
  enum class Kind { Loop, Guard, Extern };
  Kind kind = Kind::Loop;
  dsl::NodeId site = 0;
  CallPath path;           // call path of the function that lexically contains the site
  ParamSet labels;
  std::optional<std::int64_t> constant_trips;  // Loop only
  bool direct_work = false;                    // Loop: simple statements ran directly in its body
  std::vector<LoopNestNode> children;          // Loop body, or the then-arm of a Guard
  std::vector<LoopNestNode> else_children;     // Guard only
  std::string routine;                         // Extern only
  std::optional<std::string> hint;             // Extern only
};

struct LoopNestTree {
  std::string function;
  CallPath path;
  std::uint64_t invocations = 0;
  bool inlined = true;
  std::vector<LoopNestNode> children;
  /// Executed simple statements nested in at least one loop of this tree.
  std::vector<SiteKey> loop_leaves;
};

/// One tree per executed (function, call path). With `inline_calls`, loops of callees appear at
/// their call sites; without it, each tree covers only the function's own body.
/// Throws std::invalid_argument when the trace names node ids the program does not have.
std::vector<LoopNestTree> build_loop_nests(const dsl::Program& program, const taint::TraceReport& trace,
                                           bool inline_calls = true);

VolumeExpr compose_volume(const LoopNestTree& tree);

struct Structure {
  std::vector<ParamSet> additive;
  std::vector<ParamSet> multiplicative;
  bool over_approx = false;  // some single loop condition carried two or more new parameters

  [[nodiscard]] ParamSet params() const;
};

Structure classify_dependencies(const VolumeExpr& vol);

struct BoundCheck {
  bool ok = true;
  double bound = 0;
  SiteKey worst_leaf;
  double worst_count = 0;  // executions per invocation of the tree root
};

/// Substitutes every loop with its maximum observed trip count (guards and externs with 1) and
/// compares against per-invocation execution counts of every leaf under a loop.
/// Throws std::invalid_argument if an executed loop has no trip statistics.
BoundCheck upper_bound_check(const LoopNestTree& tree, const VolumeExpr& vol, const taint::TraceReport& trace);

// ---------------------------------------------------------------------------
// Dependency report

struct ExternHint {
  std::string routine;
  std::string hint;
};

struct DependencyRecord {
  std::string function;
  CallPath path;
  std::uint64_t invocations = 0;
  ParamSet dep_params;  // inclusive of inlined callees
  ParamSet own_params;  // from the function's own body only
  ParamSet own_loop_params;  // own_params carried by loop conditions (not guards or library calls)
  Structure structure;
  std::vector<taint::UnvisitedBranch> unvisited_branches;
  std::vector<ExternHint> extern_hints;
  std::size_t own_dynamic_loops = 0;
  bool own_extern_dependency = false;
  VolumeExpr volume;
  std::string volume_text;
};

struct DependencyReport {
  std::vector<std::string> params;
  std::vector<DependencyRecord> records;  // ordered by (function, call path)
  std::vector<std::string> warnings;

  [[nodiscard]] const DependencyRecord* find(const std::string& function, const CallPath& path) const;
  /// Union of dep_params over all call paths of `function`.
  [[nodiscard]] ParamSet function_params(const std::string& function) const;
};

DependencyReport analyze(const dsl::Program& program, const taint::TraceReport& trace);

std::string to_json(const DependencyReport& report);
DependencyReport deps_from_json(const std::string& text);

}  // namespace taintperf::volume
