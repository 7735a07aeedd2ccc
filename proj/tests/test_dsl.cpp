#include <gtest/gtest.h>

#include "taintperf/harness.hpp"
#include "taintperf/libdb.hpp"
#include "taintperf/parser.hpp"
#include "taintperf/validate.hpp"

using namespace taintperf;
using namespace taintperf::dsl;

namespace {

struct Counts {
  int ifs = 0, loops = 0, calls = 0;
  std::map<std::string, int> callees;
};

void count_expr(const Expr& e, Counts& c);

void count_block(const Block& b, Counts& c) {
  for (const auto& s : b) {
    std::visit(
        [&](const auto& n) {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, IfStmt>) {
            ++c.ifs;
            count_expr(*n.cond, c);
            count_block(n.then_body, c);
            count_block(n.else_body, c);
          } else if constexpr (std::is_same_v<T, WhileStmt>) {
            ++c.loops;
            count_expr(*n.cond, c);
            count_block(n.body, c);
          } else if constexpr (std::is_same_v<T, ForStmt>) {
            ++c.loops;
            count_block(n.body, c);
          } else if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
            count_expr(*n.value, c);
          } else if constexpr (std::is_same_v<T, ReturnStmt>) {
            if (n.value) count_expr(*n.value, c);
          } else if constexpr (std::is_same_v<T, ExprStmt>) {
            count_expr(*n.expr, c);
          }
        },
        s.node);
  }
}

void count_expr(const Expr& e, Counts& c) {
  if (const auto* call = std::get_if<Call>(&e.node)) {
    ++c.calls;
    ++c.callees[call->callee];
    for (const auto& a : call->args) count_expr(*a, c);
  } else if (const auto* b = std::get_if<Binary>(&e.node)) {
    count_expr(*b->lhs, c);
    count_expr(*b->rhs, c);
  }
}

Counts count(const Program& p) {
  Counts c;
  for (const auto& f : p.functions) count_block(f.body, c);
  return c;
}

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
}
)";

bool has_error(const ValidationReport& r, const std::string& needle) {
  for (const auto& e : r.errors)
    if (e.message.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Parse, MinimalProgram) {
  auto p = parse("fn main(){ let x = 1; }");
  ASSERT_EQ(p.functions.size(), 1u);
  EXPECT_EQ(count(p).loops, 0);
}

TEST(Parse, FooExampleShape) {
  auto p = parse(kFoo);
  auto c = count(p);
  EXPECT_EQ(c.ifs, 2);
  EXPECT_EQ(c.callees["pow"], 1);
}

TEST(Parse, SelfRecursionIsNotAParseError) { EXPECT_NO_THROW(parse("fn f(){ f(); }")); }

TEST(Parse, NodeIdsArePreorderAndUnique) {
  auto p = parse(kFoo);
  std::set<NodeId> ids;
  for (const auto& f : p.functions) {
    EXPECT_TRUE(ids.insert(f.id).second);
    for (const auto& s : f.body) EXPECT_TRUE(ids.insert(s.id).second);
  }
  EXPECT_EQ(*ids.begin(), 1u);
  EXPECT_LE(*ids.rbegin(), p.node_count);
}

TEST(Parse, ErrorsCarryPositions) {
  try {
    parse("fn main() {\n  let x = ;\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.pos().line, 2);
  }
  EXPECT_THROW(parse("fn main() { let x = 1 }"), ParseError);
  EXPECT_THROW(parse("fn main() { for i in 0..3 step { } }"), ParseError);
}

TEST(Parse, PrintParseRoundTrip) {
  for (const char* src : {kFoo, "fn main(){ let x = 1; }",
                          "param n;\nfn main() { source(n, \"n\"); let s = 0; for i in 0..n step 2 { s = s + i % 3; } "
                          "while s > 0 && !(s == 4) { s = s - 1; } }"}) {
    auto once = to_source(parse(src));
    auto twice = to_source(parse(once));
    EXPECT_EQ(once, twice);
  }
}

TEST(Parse, CorpusRoundTripProperty) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto c = harness::gen_corpus(seed, {12, 4, 3, 0.4});
    auto printed = to_source(c.program);
    EXPECT_EQ(to_source(parse(printed)), printed) << "seed " << seed;
  }
}

TEST(Validate, ConstantLoopFlagged) {
  auto p = parse("fn main() { let s = 0; for i in 0..10 { s = s + 1; } }");
  auto r = validate(p, nullptr);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.constant_loops.size(), 1u);
  EXPECT_EQ(r.constant_loops[0].trip_count, 10);
  EXPECT_TRUE(r.dynamic_loops.empty());
}

TEST(Validate, LoopsModifyingInductionVariableAreDynamic) {
  auto p = parse("fn main() { let s = 0; for i in 0..10 { i = i + 1; } let k = 0; while k < 3 { k = k + 1; } }");
  auto r = validate(p, nullptr);
  EXPECT_TRUE(r.constant_loops.empty());
  EXPECT_EQ(r.dynamic_loops.size(), 2u);
}

TEST(Validate, MutualRecursionWarns) {
  auto p = parse("fn f() { g(); } fn g() { f(); } fn main() { f(); }");
  auto r = validate(p, nullptr);
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.recursion_cycles.size(), 1u);
  std::set<std::string> cyc(r.recursion_cycles[0].begin(), r.recursion_cycles[0].end());
  EXPECT_EQ(cyc, (std::set<std::string>{"f", "g"}));
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Validate, ExternNeedsDatabaseEntry) {
  auto p = parse("implicit param p;\nfn main() { let r = 0; extern(\"MPI_Comm_size\", r); }");
  auto db = libdb::default_db();
  EXPECT_TRUE(validate(p, &db).ok());
  libdb::LibraryDB empty;
  EXPECT_FALSE(validate(p, &empty).ok());
  EXPECT_FALSE(validate(p, nullptr).ok());
}

TEST(Validate, StaticErrors) {
  EXPECT_TRUE(has_error(validate(parse("fn f() { return 1; }"), nullptr), "main"));
  EXPECT_TRUE(has_error(validate(parse("fn main() { x = 1; }"), nullptr), "x"));
  EXPECT_TRUE(has_error(validate(parse("fn g(a) { return a; } fn main() { g(); }"), nullptr), "g"));
  EXPECT_TRUE(has_error(validate(parse("fn main() { let x = pow(1); }"), nullptr), "pow"));
  EXPECT_TRUE(has_error(validate(parse("param n;\nfn main() { source(n, \"m\"); }"), nullptr), "m"));
  EXPECT_TRUE(has_error(validate(parse("fn main() { let s = 0; while s < 3 { return 1; } }"), nullptr), "loop"));
  EXPECT_TRUE(has_error(validate(parse("param n;\nfn main() { n = 2; }"), nullptr), "n"));
}

