#include <gtest/gtest.h>

#include "taintperf/harness.hpp"
#include "taintperf/libdb.hpp"
#include "taintperf/parser.hpp"
#include "taintperf/taint.hpp"

using namespace taintperf;
using namespace taintperf::taint;

namespace {

dsl::ExprPtr num(double v) { return std::make_unique<dsl::Expr>(dsl::Expr{0, {}, dsl::NumberLit{v, true}}); }
dsl::ExprPtr var(const std::string& n) { return std::make_unique<dsl::Expr>(dsl::Expr{0, {}, dsl::VarRef{n}}); }
dsl::ExprPtr bin(dsl::BinaryOp op, dsl::ExprPtr a, dsl::ExprPtr b) {
  return std::make_unique<dsl::Expr>(dsl::Expr{0, {}, dsl::Binary{op, std::move(a), std::move(b)}});
}

// Labels of the single loop whose trip count is driven by the observed value (`for i in 0..v`).
ParamSet loop_labels(const TraceReport& t, dsl::NodeId id) {
  for (const auto& [k, l] : t.loops)
    if (k.node == id) return l.labels;
  ADD_FAILURE() << "no loop " << id;
  return {};
}

// Id of the n-th loop statement (0-based) in preorder.
std::vector<dsl::NodeId> loop_ids(const dsl::Program& p) {
  std::vector<dsl::NodeId> out;
  std::function<void(const dsl::Block&)> walk = [&](const dsl::Block& b) {
    for (const auto& s : b) {
      if (const auto* f = std::get_if<dsl::ForStmt>(&s.node)) {
        out.push_back(s.id);
        walk(f->body);
      } else if (const auto* w = std::get_if<dsl::WhileStmt>(&s.node)) {
        out.push_back(s.id);
        walk(w->body);
      } else if (const auto* i = std::get_if<dsl::IfStmt>(&s.node)) {
        walk(i->then_body);
        walk(i->else_body);
      }
    }
  };
  for (const auto& f : p.functions) walk(f.body);
  return out;
}

const libdb::LibraryDB& db() {
  static const auto d = libdb::default_db();
  return d;
}

// The foo listing: d's final labels observed through a loop bounded by foo's result.
const char* kFoo = R"(
param a; param b; param c;
fn foo(x, y, z) {
  let d = 2 * x;
  if y { d = d + 1; }
  if z { d = pow(d, 2); }
  return d;
}
fn main() {
  source(a, "a"); source(b, "b"); source(c, "c");
  let r = foo(a, b, c);
  let s = 0;
  for i in 0..r { s = s + 1; }
}
)";

}  // namespace

TEST(LabelAlgebra, UnionProperties) {
  ParamTable t({"a", "b", "c"});
  auto a = t.label("a"), b = t.label("b"), c = t.label("c");
  EXPECT_EQ(a | a, a);
  EXPECT_EQ(a | b, b | a);
  EXPECT_EQ((a | b) | c, a | (b | c));
  EXPECT_EQ(a | LabelSet{}, a);
  EXPECT_TRUE((a | b).contains(a));
  EXPECT_EQ(t.names(a | c), (ParamSet{"a", "c"}));
  for (std::uint64_t x = 0; x < 8; ++x)
    for (std::uint64_t y = 0; y < 8; ++y) {
      LabelSet sx, sy;
      for (std::size_t i = 0; i < 3; ++i) {
        if (x >> i & 1) sx |= LabelSet::single(i);
        if (y >> i & 1) sy |= LabelSet::single(i);
      }
      EXPECT_EQ((sx | sy).size(), static_cast<std::size_t>(std::popcount(x | y)));
      EXPECT_TRUE((sx | sy).contains(sx));
    }
}

TEST(TaintState, MarkSource) {
  TaintState s(ParamTable({"size", "p"}));
  s.push_frame();
  s.assign("x", Value::integer(5), {});
  s.mark_source("x", "size");
  s.mark_source("x", "size");
  EXPECT_EQ(s.params().names(s.lookup("x")->labels), ParamSet{"size"});
  s.assign("y", s.lookup("x")->value, s.lookup("x")->labels);
  EXPECT_EQ(s.params().names(s.lookup("y")->labels), ParamSet{"size"});
  s.mark_source("x", "p");
  EXPECT_EQ(s.params().names(s.lookup("x")->labels), (ParamSet{"p", "size"}));
  EXPECT_THROW(s.mark_source("x", "q"), std::exception);
  EXPECT_THROW(s.mark_source("nope", "p"), std::exception);
}

TEST(TaintState, PropagateExpr) {
  TaintState s(ParamTable({"a", "b"}));
  s.push_frame();
  s.assign("a", Value::integer(3), s.params().label("a"));
  s.assign("c1", Value::integer(1), {});
  s.assign("c2", Value::integer(2), {});
  auto two_a = bin(dsl::BinaryOp::Mul, num(2), var("a"));
  EXPECT_EQ(s.params().names(propagate_expr(s, *two_a)), ParamSet{"a"});
  auto sum = bin(dsl::BinaryOp::Add, var("c1"), var("c2"));
  EXPECT_TRUE(propagate_expr(s, *sum).empty());
  s.enter_control(s.params().label("b"));
  EXPECT_EQ(s.params().names(propagate_expr(s, *sum)), ParamSet{"b"});
  s.assign("d", Value::integer(1), {});
  EXPECT_EQ(s.params().names(s.lookup("d")->labels), ParamSet{"b"});
  s.exit_control();
  EXPECT_TRUE(propagate_expr(s, *sum).empty());
}

TEST(TaintState, ImplicitWritesOnExit) {
  TaintState s(ParamTable({"c"}));
  s.push_frame();
  s.assign("d", Value::integer(4), {});
  s.enter_control(s.params().label("c"));
  s.exit_control({"d"}, true);
  EXPECT_EQ(s.params().names(s.lookup("d")->labels), ParamSet{"c"});
  s.assign("e", Value::integer(4), {});
  s.enter_control(s.params().label("c"));
  s.exit_control({"e"}, false);
  EXPECT_TRUE(s.lookup("e")->labels.empty());
}

TEST(Run, FooReturnCarriesAllThreeLabels) {
  auto p = dsl::parse(kFoo);
  auto loops = loop_ids(p);
  ASSERT_EQ(loops.size(), 1u);
  auto t = run(p, {{"a", 1}, {"b", 1}, {"c", 0}}, db());
  EXPECT_EQ(loop_labels(t, loops[0]), (ParamSet{"a", "b", "c"}));
  EXPECT_EQ(t.loops.begin()->second.trips.total, 3u);
}

TEST(Run, ImplicitFlowOfUntakenBranch) {
  const char* src = R"(
param c;
fn main() {
  source(c, "c");
  let d = 3;
  if c { d = pow(d, 2); }
  let s = 0;
  for i in 0..d { s = s + 1; }
}
)";
  auto p = dsl::parse(src);
  auto id = loop_ids(p)[0];
  RunOptions on;
  EXPECT_TRUE(loop_labels(run(p, {{"c", 0}}, db(), on), id).count("c"));
  RunOptions off;
  off.implicit_flows = false;
  EXPECT_FALSE(loop_labels(run(p, {{"c", 0}}, db(), off), id).count("c"));
  // The taken arm taints explicitly regardless of mode.
  EXPECT_TRUE(loop_labels(run(p, {{"c", 1}}, db(), off), id).count("c"));
}

TEST(Run, IterateListing) {
  const char* src = R"(
param size; param stride;
fn iterate(n, st) {
  let i = 0;
  while i < n { i = i + st; }
}
fn main() {
  source(size, "size"); source(stride, "stride");
  iterate(size * size, stride);
}
)";
  auto p = dsl::parse(src);
  auto t = run(p, {{"size", 4}, {"stride", 2}}, db());
  ASSERT_EQ(t.loops.size(), 1u);
  EXPECT_EQ(t.loops.begin()->second.labels, (ParamSet{"size", "stride"}));
  EXPECT_EQ(t.loops.begin()->second.trips.total, 8u);
}

TEST(Run, ConstantLoopIsUntainted) {
  auto p = dsl::parse("fn main() { let s = 0; for i in 0..7 { s = s + 1; } }");
  auto t = run(p, {}, db());
  ASSERT_EQ(t.loops.size(), 1u);
  EXPECT_TRUE(t.loops.begin()->second.labels.empty());
  EXPECT_EQ(t.loops.begin()->second.trips.total, 7u);
}

TEST(Run, SquareRootLoopTripCount) {
  auto p = dsl::parse("param size;\nfn main() { source(size, \"size\"); let i = 0; while i * i < size { i = i + 1; } }");
  auto t = run(p, {{"size", 25}}, db());
  ASSERT_EQ(t.loops.size(), 1u);
  // Hand simulation: i = 0..4 satisfy i*i < 25, so five iterations.
  EXPECT_EQ(t.loops.begin()->second.trips.total, 5u);
  EXPECT_EQ(t.loops.begin()->second.labels, ParamSet{"size"});
}

TEST(Run, UnsourcedParameterStaysUntainted) {
  auto p = dsl::parse("param n;\nfn main() { let s = 0; for i in 0..n { s = s + 1; } }");
  auto t = run(p, {{"n", 3}}, db());
  EXPECT_TRUE(t.loops.begin()->second.labels.empty());
}

TEST(Run, CommSizeSourcesImplicitParameter) {
  const char* src = R"(
implicit param p;
fn main() {
  let r = 0;
  extern("MPI_Comm_size", r);
  let s = 0;
  for i in 0..r { s = s + 1; }
}
)";
  auto t = run(dsl::parse(src), {{"p", 4}}, db());
  EXPECT_EQ(t.loops.begin()->second.labels, ParamSet{"p"});
  EXPECT_EQ(t.loops.begin()->second.trips.total, 4u);
}

TEST(Run, SendTemplateRecordsDependency) {
  const char* src = R"(
param size;
implicit param p;
fn main() {
  source(size, "size");
  let n = size * 2;
  extern("MPI_Send", 1, n);
}
)";
  auto t = run(dsl::parse(src), {{"size", 4}, {"p", 2}}, db());
  ASSERT_EQ(t.externs.size(), 1u);
  EXPECT_TRUE(t.externs.begin()->second.has_dependency);
  EXPECT_EQ(t.externs.begin()->second.dependency, (ParamSet{"p", "size"}));
}

TEST(Run, MissingParameterValueNamesIt) {
  auto p = dsl::parse("param size;\nfn main() { source(size, \"size\"); }");
  try {
    run(p, {}, db());
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("size"), std::string::npos);
  }
}

TEST(Run, InvalidProgramAndRuntimeErrors) {
  EXPECT_THROW(run(dsl::parse("fn main() { x = 1; }"), {}, db()), std::invalid_argument);
  EXPECT_THROW(run(dsl::parse("fn main() { let x = 1 / 0; }"), {}, db()), RunError);
  RunOptions o;
  o.max_trip_count = 100;
  EXPECT_THROW(run(dsl::parse("fn main() { let i = 0; while i < 1000 { i = i + 1; } }"), {}, db(), o), RunError);
}

TEST(Run, RecursionIsOpaqueWithWarning) {
  const char* src = R"(
param n;
fn f(k) { if k > 0 { f(k - 1); } return k; }
fn main() { source(n, "n"); let r = f(n); }
)";
  auto t = run(dsl::parse(src), {{"n", 3}}, db());
  EXPECT_FALSE(t.warnings.empty());
}

TEST(Run, CallPathsSeparateContexts) {
  const char* src = R"(
param n; param m;
fn work(k) { let s = 0; for i in 0..k { s = s + 1; } }
fn main() { source(n, "n"); source(m, "m"); work(n); work(m); }
)";
  auto t = run(dsl::parse(src), {{"n", 3}, {"m", 5}}, db());
  ASSERT_EQ(t.loops.size(), 2u);
  std::set<ParamSet> labels;
  for (const auto& [k, l] : t.loops) {
    EXPECT_EQ(k.path.size(), 1u);
    labels.insert(l.labels);
  }
  EXPECT_EQ(labels, (std::set<ParamSet>{{"n"}, {"m"}}));
}

TEST(Oracle, DirectLiteralAndQuotient) {
  const char* src = R"(
param size; param stride;
fn main() {
  source(size, "size"); source(stride, "stride");
  let s = 0;
  for i in 0..size { s = s + 1; }
  for i in 0..5 { s = s + 1; }
  for i in 0..size / stride { s = s + 1; }
}
)";
  auto p = dsl::parse(src);
  auto ids = loop_ids(p);
  auto o = perturbation_oracle(p, {{"size", 64}, {"stride", 1}}, db(), {2.0});
  EXPECT_EQ(o.at({ids[0], {}}), ParamSet{"size"});
  EXPECT_TRUE(o.at({ids[1], {}}).empty());
  EXPECT_EQ(o.at({ids[2], {}}), (ParamSet{"size", "stride"}));
}

TEST(Trace, JsonRoundTripAndDeterminism) {
  auto c = harness::gen_corpus(11, {});
  auto a = run(c.program, c.truth.base, db());
  auto b = run(c.program, c.truth.base, db());
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(to_json(trace_from_json(to_json(a))), to_json(a));
}

TEST(Trace, MergeAccumulates) {
  auto p = dsl::parse("param n;\nfn main() { source(n, \"n\"); let s = 0; for i in 0..n { s = s + 1; } }");
  auto a = run(p, {{"n", 3}}, db());
  auto b = run(p, {{"n", 5}}, db());
  auto m = merge({a, b});
  const auto& stats = m.loops.begin()->second.trips;
  EXPECT_EQ(stats.entries, 2u);
  EXPECT_EQ(stats.total, 8u);
  EXPECT_EQ(stats.min, 3u);
  EXPECT_EQ(stats.max, 5u);
}
