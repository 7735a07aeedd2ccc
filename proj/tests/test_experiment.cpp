#include <gtest/gtest.h>

#include <cmath>

#include "taintperf/experiment.hpp"
#include "taintperf/harness.hpp"
#include "taintperf/parser.hpp"

using namespace taintperf;
using namespace taintperf::experiment;

namespace {

std::map<std::string, std::vector<double>> five(std::initializer_list<std::string> names) {
  std::map<std::string, std::vector<double>> v;
  for (const auto& n : names) v[n] = {2, 4, 8, 16, 32};
  return v;
}

std::string csv_rows(int configs, int reps) {
  std::string s = "function,callpath,p,size,rep,value\n";
  for (int c = 0; c < configs; ++c)
    for (int r = 0; r < reps; ++r)
      s += "k,7," + std::to_string(2 << (c / 5)) + "," + std::to_string(10 + c % 5) + "," + std::to_string(r) +
           ",1.5\n";
  return s;
}

pmnf::MeasurementSet series(const std::string& fn, const std::vector<Config>& configs,
                            const std::function<double(const Config&)>& f, harness::Rng* rng = nullptr,
                            double sigma = 0) {
  pmnf::MeasurementSet ms;
  ms.function = fn;
  for (const auto& c : configs) {
    pmnf::Measurement m{c, {}};
    for (int r = 0; r < 5; ++r) m.samples.push_back(f(c) * (1 + (rng ? sigma * rng->normal() : 0)));
    ms.points.push_back(m);
  }
  return ms;
}

}  // namespace

TEST(Design, MultiplicativeIsFullCross) {
  std::vector<ParamSet> groups{{"p", "size"}};
  EXPECT_EQ(design(five({"p", "size"}), &groups).configs.size(), 25u);
  EXPECT_EQ(design(five({"p", "size"}), static_cast<const std::vector<ParamSet>*>(nullptr)).configs.size(), 25u);
}

TEST(Design, AdditiveSharesBase) {
  std::vector<ParamSet> none;
  auto d = design(five({"p", "size"}), &none);
  EXPECT_EQ(d.configs.size(), 9u);
  EXPECT_EQ(d.base, (Config{{"p", 2}, {"size", 2}}));
  EXPECT_EQ(design(five({"p", "size", "n"}), &none).configs.size(), 13u);
}

TEST(Design, SingleParameterAlwaysFive) {
  std::vector<ParamSet> groups{{"p"}};
  EXPECT_EQ(design(five({"p"}), &groups).configs.size(), 5u);
  EXPECT_EQ(design(five({"p"}), static_cast<const std::vector<ParamSet>*>(nullptr)).configs.size(), 5u);
}

TEST(Design, SizeFormulaProperty) {
  // One group of g params among k, each with v values: v^g + (k - g) * (v - 1).
  for (int k = 1; k <= 4; ++k)
    for (int g = 1; g <= k; ++g)
      for (int v = 2; v <= 5; ++v) {
        std::map<std::string, std::vector<double>> vals;
        ParamSet group;
        for (int i = 0; i < k; ++i) {
          std::string n = "x" + std::to_string(i);
          for (int j = 0; j < v; ++j) vals[n].push_back(1 << (j + 1));
          if (i < g) group.insert(n);
        }
        std::vector<ParamSet> groups{group};
        auto expected = static_cast<std::size_t>(std::pow(v, g)) + static_cast<std::size_t>((k - g) * (v - 1));
        EXPECT_EQ(design(vals, &groups).configs.size(), expected) << k << " " << g << " " << v;
      }
}

TEST(Design, EmptyValuesRejectedAndJsonRoundTrip) {
  std::map<std::string, std::vector<double>> bad{{"p", {}}};
  EXPECT_THROW(design(bad, static_cast<const std::vector<ParamSet>*>(nullptr)), std::invalid_argument);
  auto d = design(five({"p", "size"}), static_cast<const std::vector<ParamSet>*>(nullptr), 3);
  auto text = to_json(d);
  EXPECT_EQ(to_json(design_from_json(text)), text);
  EXPECT_EQ(design_from_json(text).repetitions, 3);
}

TEST(Ingest, FullFile) {
  auto ms = ingest_text(csv_rows(25, 5));
  ASSERT_EQ(ms.sets.size(), 1u);
  EXPECT_EQ(ms.sets[0].points.size(), 25u);
  for (const auto& p : ms.sets[0].points) EXPECT_EQ(p.samples.size(), 5u);
  EXPECT_EQ(ms.sets[0].path, (CallPath{7}));
  EXPECT_EQ(ingest_text(to_csv(ms)).sets[0].points.size(), 25u);
  EXPECT_EQ(to_csv(ingest_text(to_csv(ms))), to_csv(ms));
}

TEST(Ingest, EmptyFileWarns) {
  auto ms = ingest_text("");
  EXPECT_TRUE(ms.sets.empty());
  EXPECT_FALSE(ms.warnings.empty());
}

TEST(Ingest, DuplicateRowRejectedWithLine) {
  std::string s = "function,callpath,p,rep,value\nk,,2,0,1.0\nk,,4,0,1.0\nk,,2,0,1.1\n";
  try {
    ingest_text(s);
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  EXPECT_THROW(ingest_text("function,callpath,p,rep,value\nk,,x,0,1\n"), IngestError);
  EXPECT_THROW(ingest_text("function,callpath,p,rep,value\nk,,2,0\n"), IngestError);
  EXPECT_THROW(ingest_text("fn,p\n"), IngestError);
}

TEST(Cov, Values) {
  EXPECT_DOUBLE_EQ(coefficient_of_variation({10, 10, 10, 10, 10}), 0);
  // mean 12, population variance (4 * 4 + 64) / 5 = 16.
  EXPECT_NEAR(coefficient_of_variation({10, 10, 10, 10, 20}), 4.0 / 12.0, 1e-12);
}

TEST(Cov, FilterThresholds) {
  Measurements ms;
  ms.params = {"p"};
  pmnf::MeasurementSet a, b;
  a.function = "steady";
  a.points = {{{{"p", 2}}, {10, 10, 10, 10, 10}}};
  b.function = "noisy";
  b.points = {{{{"p", 2}}, {10, 10, 10, 10, 20}}};
  ms.sets = {b, a};
  auto r = cov_filter(ms);
  ASSERT_EQ(r.kept.sets.size(), 1u);
  EXPECT_EQ(r.kept.sets[0].function, "steady");
  ASSERT_EQ(r.excluded.size(), 1u);
  EXPECT_EQ(r.excluded[0].key.function, "noisy");
  EXPECT_NEAR(r.excluded[0].configs[0].cov, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(cov_filter(ms, std::numeric_limits<double>::infinity()).kept.sets.size(), 2u);
  // Idempotence: filtering the survivors again removes nothing.
  auto again = cov_filter(r.kept);
  EXPECT_TRUE(again.excluded.empty());
  EXPECT_EQ(again.kept.sets.size(), r.kept.sets.size());
}

TEST(Classify, GetterConstantLoopAndComm) {
  const char* src = R"(
param size;
implicit param p;
fn getter() { return 3; }
fn fixed() { let s = 0; for i in 0..8 { s = s + 1; } return s; }
fn comm() { extern("MPI_Send", 1, 4); }
fn kernel() { let s = 0; for i in 0..size { s = s + 1; } }
fn pruned() { let k = 0; while k < 3 { k = k + 1; } }
fn main() { source(size, "size"); let r = 0; extern("MPI_Comm_size", r);
  getter(); fixed(); comm(); kernel(); pruned(); }
)";
  auto prog = dsl::parse(src);
  auto db = libdb::default_db();
  auto trace = taint::run(prog, {{"size", 4}, {"p", 4}}, db);
  auto deps = volume::analyze(prog, trace);
  auto c = classify(prog, dsl::validate(prog, &db), deps, db);
  EXPECT_EQ(c.classes.at("getter"), FunctionClass::StaticallyPruned);
  EXPECT_EQ(c.classes.at("fixed"), FunctionClass::StaticallyPruned);
  EXPECT_EQ(c.classes.at("comm"), FunctionClass::CommRoutine);
  EXPECT_EQ(c.classes.at("kernel"), FunctionClass::Kernel);
  EXPECT_EQ(c.classes.at("pruned"), FunctionClass::DynamicallyPruned);
  EXPECT_EQ(c.classes.at("MPI_Send"), FunctionClass::Extern);
  auto f = c.filter();
  EXPECT_NE(std::find(f.begin(), f.end(), "kernel"), f.end());
  EXPECT_NE(std::find(f.begin(), f.end(), "comm"), f.end());
  EXPECT_EQ(std::find(f.begin(), f.end(), "getter"), f.end());
  EXPECT_EQ(std::find(f.begin(), f.end(), "pruned"), f.end());
}

TEST(Spearman, Basics) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1);
  EXPECT_NEAR(spearman({1, 2, 3}, {1, 1, 1}), 0, 1e-12);
}

namespace {

struct ValidityCase {
  Measurements ms;
  volume::DependencyReport deps;
  ModelMap bb, guided;
};

ValidityCase make_case(pmnf::MeasurementSet set, const ParamSet& dep_params, volume::Structure st) {
  ValidityCase c;
  c.ms.params = {};
  for (const auto& [k, v] : set.points.front().config) c.ms.params.push_back(k);
  volume::DependencyRecord rec;
  rec.function = set.function;
  rec.dep_params = dep_params;
  rec.own_params = dep_params;
  rec.structure = st;
  c.deps.records.push_back(rec);
  c.deps.params = c.ms.params;
  FnKey key{set.function, set.path};
  c.guided[key] = pmnf::select_model(set, pmnf::ModelDeps{dep_params, st});
  c.bb[key] = pmnf::select_model(set, std::nullopt);
  c.ms.sets.push_back(std::move(set));
  return c;
}

std::vector<Config> sweep(const std::vector<double>& rs, const std::vector<double>& sizes) {
  std::vector<Config> out;
  for (double r : rs) out.push_back({{"r", r}, {"size", sizes[0]}});
  for (std::size_t i = 1; i < sizes.size(); ++i) out.push_back({{"r", rs[0]}, {"size", sizes[i]}});
  return out;
}

}  // namespace

TEST(Validity, ContentionFlagged) {
  harness::Rng rng(3);
  auto set = series("k", sweep({2, 4, 6, 8, 10, 12, 14, 16, 18}, {4, 8, 16, 32, 64}),
                    [](const Config& c) {
                      double t = 127 + 0.5 * c.at("size");
                      return t + 2.86 * std::pow(std::log2(c.at("r")), 2);
                    },
                    &rng, 0.01);
  auto c = make_case(set, {"size"}, {{{"size"}}, {}, false});
  auto rep = validate_experiment(c.bb, c.guided, &c.deps, c.ms);
  ASSERT_EQ(rep.functions.size(), 1u);
  ASSERT_EQ(rep.functions[0].contention.size(), 1u);
  EXPECT_EQ(rep.functions[0].contention[0].param, "r");
  EXPECT_GE(rep.functions[0].contention[0].rho, 0.8);
}

TEST(Validity, BehaviorChangeSplit) {
  std::vector<Config> cfgs;
  for (double p : {2, 4, 8, 16, 32, 64, 128, 256}) cfgs.push_back({{"p", p}});
  auto set = series("k", cfgs, [](const Config& c) { return c.at("p") <= 16 ? 50.0 : 50.0 + 30.0 * (c.at("p") - 16); });
  auto c = make_case(set, {"p"}, {{{"p"}}, {}, false});
  auto rep = validate_experiment(c.bb, c.guided, &c.deps, c.ms);
  ASSERT_TRUE(rep.functions[0].behavior_change) << c.guided.begin()->second.formula();
  EXPECT_EQ(rep.functions[0].behavior_change->param, "p");
  EXPECT_DOUBLE_EQ(rep.functions[0].behavior_change->split, 16);
}

TEST(Validity, CleanMultiplicativeHasNoFlags) {
  std::vector<Config> cfgs;
  for (double p : {2, 4, 8, 16, 32})
    for (double s : {4, 8, 16, 32, 64}) cfgs.push_back({{"p", p}, {"size", s}});
  auto set = series("k", cfgs, [](const Config& c) { return 3 * c.at("p") * c.at("size"); });
  auto c = make_case(set, {"p", "size"}, {{}, {{"p", "size"}}, false});
  auto rep = validate_experiment(c.bb, c.guided, &c.deps, c.ms);
  EXPECT_FALSE(rep.functions[0].flagged());
}

TEST(Validity, MismatchedSetsThrow) {
  std::vector<Config> cfgs;
  for (double p : {2, 4, 8, 16, 32}) cfgs.push_back({{"p", p}});
  auto c = make_case(series("k", cfgs, [](const Config& x) { return x.at("p"); }), {"p"}, {{{"p"}}, {}, false});
  ModelMap empty;
  EXPECT_THROW(validate_experiment(empty, c.guided, &c.deps, c.ms), std::invalid_argument);
}
