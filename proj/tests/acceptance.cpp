// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "taintperf/experiment.hpp"
#include "taintperf/harness.hpp"
#include "taintperf/libdb.hpp"
#include "taintperf/parser.hpp"
#include "taintperf/pipeline.hpp"
#include "taintperf/taint.hpp"
#include "taintperf/util.hpp"
#include "taintperf/validate.hpp"
#include "taintperf/volume.hpp"

using namespace taintperf;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::cout << id << ' ' << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const libdb::LibraryDB& db() {
  static const auto d = libdb::default_db();
  return d;
}

// Corpus shapes cycle through parameter counts and depths so every generator path is exercised.
harness::CorpusSpec corpus_spec(std::uint64_t seed) {
  harness::CorpusSpec s;
  s.functions = 20 + static_cast<int>(seed % 3) * 5;
  s.params = 2 + static_cast<int>(seed % 5);
  s.depth = std::min(s.params, 1 + static_cast<int>(seed % 4));
  s.constant_share = 0.3;
  return s;
}

// ---------------------------------------------------------------------------

void ac1_taint_soundness() {
  auto t0 = Clock::now();
  std::size_t reported = 0, fp = 0, fn = 0, loops = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto c = harness::gen_corpus(seed, corpus_spec(seed));
    auto trace = taint::run(c.program, c.truth.base, db());
    auto oracle = taint::perturbation_oracle(c.program, c.truth.base, db(), {2.0, 3.0});
    for (const auto& [key, rec] : trace.loops) {
      ++loops;
      auto it = oracle.find(key);
      ParamSet truth = it == oracle.end() ? ParamSet{} : it->second;
      for (const auto& p : truth)
        if (!rec.labels.count(p)) ++fn;
      for (const auto& p : rec.labels) {
        ++reported;
        if (!truth.count(p)) ++fp;
      }
    }
    // Loops the oracle saw change but the base run never executed would be misses as well.
    for (const auto& [key, ps] : oracle)
      if (!trace.loops.count(key)) fn += ps.size();
  }
  double secs = seconds_since(t0);
  double rate = reported ? static_cast<double>(fp) / static_cast<double>(reported) : 0;
  std::ostringstream d;
  d << loops << " loops, " << reported << " reported pairs, FN=" << fn << ", FP=" << fp << " (" << rate * 100
    << "% <= 10%), " << secs << " s (< 120 s)";
  report("AC1", fn == 0 && rate <= 0.10 && secs < 120, d.str());
}

void ac2_volume_bound() {
  std::size_t checks = 0, failed = 0;
  std::set<std::string> kinds;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto c = harness::gen_corpus(seed, corpus_spec(seed));
    for (const auto& f : c.truth.functions) kinds.insert(f.kind);
    for (double scale : {1.0, 2.0, 3.0}) {
      auto cfg = c.truth.base;
      for (auto& [p, v] : cfg) v = std::round(v * scale);
      auto trace = taint::run(c.program, cfg, db());
      for (const auto& tree : volume::build_loop_nests(c.program, trace)) {
        auto vol = volume::compose_volume(tree);
        auto b = volume::upper_bound_check(tree, vol, trace);
        ++checks;
        if (!b.ok) ++failed;
      }
    }
  }
  bool covered = kinds.count("triangular") && kinds.count("guarded");
  std::ostringstream d;
  d << checks << " (function, config) checks, " << failed << " violations; triangular and guarded nests present: "
    << (covered ? "yes" : "no");
  report("AC2", failed == 0 && covered && checks > 0, d.str());
}

void ac3_pmnf_recovery() {
  auto t0 = Clock::now();
  auto space = pmnf::SearchSpace::defaults();
  space.n = 1;
  auto hyps = pmnf::enumerate_hypotheses(space, "x");
  std::size_t tested = 0, ok = 0;
  double worst = 0;
  pmnf::SelectOptions opts;
  opts.space = space;
  for (const auto& h : hyps) {
    if (h.terms.empty()) continue;
    ++tested;
    pmnf::MeasurementSet ms;
    ms.function = "gen";
    for (int k = 1; k <= 8; ++k) {
      double x = std::ldexp(1.0, k);
      ms.points.push_back({{{"x", x}}, {2.5 + 0.75 * h.terms[0].eval({{"x", x}})}});
    }
    auto m = pmnf::select_model(ms, std::nullopt, opts);
    double err = 0;
    for (const auto& pt : ms.points) {
      double truth = pt.samples[0];
      err = std::max(err, std::fabs(pmnf::evaluate(m, pt.config) - truth) / std::fabs(truth));
    }
    worst = std::max(worst, err);
    if (err <= 1e-6) ++ok;
  }
  double secs = seconds_since(t0);
  std::ostringstream d;
  d << ok << "/" << tested << " hypotheses recovered (53 expected), max relative error " << worst << " (<= 1e-6), "
    << secs << " s (< 60 s)";
  report("AC3", tested == 53 && ok == tested && secs < 60, d.str());
}

void ac4_reference_models() {
  const std::vector<double> ps{27, 64, 125, 343, 729};
  const std::vector<double> sizes{25, 30, 35, 40, 45};
  auto rel = [](double a, double b) { return std::fabs(a - b) / std::fabs(b); };
  auto coef_of = [](const pmnf::PerfModel& m, const std::string& term) -> double {
    for (std::size_t i = 0; i < m.hypothesis.terms.size(); ++i)
      if (m.hypothesis.terms[i].str() == term) return m.coefficients[i + 1];
    return std::nan("");
  };

  // Additive model on the additive design (one sweep per parameter through the base).
  pmnf::MeasurementSet add;
  add.function = "additive";
  auto add_f = [](double p, double s) { return 3e-3 * std::sqrt(p) + 1e-5 * s * s * s; };
  for (double p : ps) add.points.push_back({{{"p", p}, {"size", sizes[0]}}, {add_f(p, sizes[0])}});
  for (std::size_t i = 1; i < sizes.size(); ++i) add.points.push_back({{{"p", ps[0]}, {"size", sizes[i]}}, {add_f(ps[0], sizes[i])}});
  volume::Structure add_st{{{"p"}, {"size"}}, {}, false};
  auto ma = pmnf::select_model(add, pmnf::ModelDeps{{"p", "size"}, add_st});
  bool add_ok = ma.hypothesis.terms.size() == 2 && rel(coef_of(ma, "p^(1/2)"), 3e-3) <= 1e-3 &&
                rel(coef_of(ma, "size^3"), 1e-5) <= 1e-3 && std::fabs(ma.coefficients[0]) <= 1e-3 * ma.y_scale;

  // Multiplicative model on the full cross product.
  pmnf::MeasurementSet mul;
  mul.function = "multiplicative";
  for (double p : ps)
    for (double s : sizes) mul.points.push_back({{{"p", p}, {"size", s}}, {2.4e-8 * std::pow(p, 0.25) * s * s * s}});
  volume::Structure mul_st{{}, {{"p", "size"}}, false};
  auto mm = pmnf::select_model(mul, pmnf::ModelDeps{{"p", "size"}, mul_st});
  bool mul_ok = mm.hypothesis.terms.size() == 1 && rel(coef_of(mm, "p^(1/4) * size^3"), 2.4e-8) <= 1e-3 &&
                std::fabs(mm.coefficients[0]) <= 1e-3 * mm.y_scale;

  report("AC4", add_ok && mul_ok,
         "additive -> " + ma.formula() + (add_ok ? " (ok)" : " (wrong)") + "; multiplicative -> " + mm.formula() +
             (mul_ok ? " (ok)" : " (wrong)"));
}

void ac5_constant_pruning() {
  std::vector<harness::FunctionTruth> fns;
  harness::Rng rng(2024);
  for (int i = 0; i < 100; ++i) {
    harness::FunctionTruth f;
    char name[16];
    std::snprintf(name, sizeof name, "c%03d", i);
    f.name = name;
    f.formula.coefficients = {rng.uniform(1, 100)};
    fns.push_back(f);
  }
  std::map<std::string, std::vector<double>> vals{{"p", {2, 4, 8, 16, 32}}, {"size", {4, 8, 16, 32, 64}}};
  auto d = experiment::design(vals, static_cast<const std::vector<ParamSet>*>(nullptr), 5);
  auto ms = harness::gen_measurements(fns, d, {0.10, std::nullopt}, 77);
  std::size_t guided_const = 0, bb_param = 0;
  for (const auto& s : ms.sets) {
    if (pmnf::select_model(s, pmnf::ModelDeps{}).is_constant()) ++guided_const;
    if (!pmnf::select_model(s, std::nullopt).is_constant()) ++bb_param;
  }
  std::ostringstream o;
  o << "guided: " << guided_const << "/100 constant models; black-box: " << bb_param << "/100 parametric (>= 1)";
  report("AC5", guided_const == 100 && bb_param >= 1, o.str());
}

void ac6_design_reduction() {
  auto vals = [](int k) {
    std::map<std::string, std::vector<double>> v;
    for (int i = 0; i < k; ++i) v["x" + std::to_string(i)] = {2, 4, 8, 16, 32};
    return v;
  };
  std::vector<ParamSet> none;
  auto a2 = experiment::design(vals(2), &none).configs.size();
  auto f2 = experiment::design(vals(2), static_cast<const std::vector<ParamSet>*>(nullptr)).configs.size();
  auto a3 = experiment::design(vals(3), &none).configs.size();
  auto f3 = experiment::design(vals(3), static_cast<const std::vector<ParamSet>*>(nullptr)).configs.size();
  std::ostringstream o;
  o << "2 params: " << a2 << " vs " << f2 << " (" << std::lround(100.0 * (1.0 - double(a2) / double(f2)))
    << "% fewer); 3 params: " << a3 << " vs " << f3;
  report("AC6", a2 == 9 && f2 == 25 && a3 == 13 && f3 == 125, o.str());
}

void ac7_classification() {
  bool all_ok = true;
  std::ostringstream o;
  for (std::uint64_t seed : {85u, 86u, 87u}) {
    harness::CorpusSpec spec{20, 3, 2, 0.85};
    auto c = harness::gen_corpus(seed, spec);
    auto vr = dsl::validate(c.program, &db());
    auto trace = taint::run(c.program, c.truth.base, db());
    auto deps = volume::analyze(c.program, trace);
    auto cls = experiment::classify(c.program, vr, deps, db());
    auto filter = cls.filter();
    std::size_t pruned = 0, agree = 0, leaked = 0;
    for (const auto& f : c.truth.functions) {
      auto k = cls.classes.at(f.name);
      bool is_pruned = k == experiment::FunctionClass::StaticallyPruned || k == experiment::FunctionClass::DynamicallyPruned;
      pruned += is_pruned ? 1 : 0;
      agree += k == f.cls ? 1 : 0;
      if (is_pruned && std::find(filter.begin(), filter.end(), f.name) != filter.end()) ++leaked;
    }
    bool ok = pruned == c.truth.constant_count() && pruned * 100 == 85 * c.truth.functions.size() &&
              agree == c.truth.functions.size() && leaked == 0;
    all_ok = all_ok && ok;
    o << "seed " << seed << ": " << pruned << "/" << c.truth.functions.size() << " pruned, " << agree
      << " classes match truth, " << leaked << " pruned in filter; ";
  }
  report("AC7", all_ok, o.str());
}

// Kernel that depends on size only; p (the rank count) is swept but must not matter.
struct ContentionSetup {
  dsl::Program program = dsl::parse(R"(param size;
implicit param p;
fn kernel() { let s = 0; for i in 0..size { s = s + 1; } }
fn main() { source(size, "size"); let r = 0; extern("MPI_Comm_size", r); kernel(); }
)");
  volume::DependencyReport deps;
  experiment::Design design;
  std::vector<harness::FunctionTruth> truth;

  ContentionSetup() {
    deps = volume::analyze(program, taint::run(program, {{"size", 4}, {"p", 2}}, db()));
    std::map<std::string, std::vector<double>> vals{{"size", {4, 8, 16, 32, 64}},
                                                    {"p", {2, 4, 6, 8, 10, 12, 14, 16, 18}}};
    design = experiment::design(vals, &deps, 5);
    harness::FunctionTruth f;
    f.name = "kernel";
    for (const auto& r : deps.records)
      if (r.function == "kernel") f.path = r.path;
    f.formula.hypothesis.terms = {pmnf::Term{{pmnf::Factor{"size", pmnf::Rational(1), 0}}}};
    f.formula.coefficients = {127, 0.5};
    f.formula.params = {"size"};
    truth = {f};
  }

  bool flagged(std::uint64_t seed, bool contaminate) const {
    harness::NoiseSpec noise{0.05, std::nullopt};
    if (contaminate) noise.contamination = harness::Contamination{"p", 0.2};
    auto ms = harness::gen_measurements(truth, design, noise, seed);
    pipeline::ModelOptions mo;
    mo.mode = pipeline::Mode::Both;
    mo.cov_threshold = std::numeric_limits<double>::infinity();
    auto run = pipeline::model_all(ms, &deps, mo);
    auto rep = experiment::validate_experiment(run.blackbox, run.guided, &deps, ms);
    for (const auto& c : rep.functions.at(0).contention)
      if (c.param == "p") return true;
    return false;
  }
};

void ac8_contention() {
  ContentionSetup s;
  int hits = 0, false_alarms = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    hits += s.flagged(seed, true) ? 1 : 0;
    false_alarms += s.flagged(1000 + seed, false) ? 1 : 0;
  }
  std::ostringstream o;
  o << "contaminated: " << hits << "/100 flagged (>= 95); clean: " << false_alarms << "/100 flagged (<= 5); "
    << s.design.configs.size() << " configs";
  report("AC8", hits >= 95 && false_alarms <= 5, o.str());
}

void ac9_behavior_change() {
  // Ten points with the knee drawn so each regime keeps at least four of them.
  const std::vector<double> ps{2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};
  const std::vector<double> knees{16, 32, 64};
  int correct = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    harness::Rng rng(seed);
    double knee = knees[rng.index(knees.size())];
    double base = rng.uniform(10, 100);
    double slope = 0.6 * base;
    experiment::Measurements ms;
    ms.params = {"p"};
    pmnf::MeasurementSet set;
    set.function = "solver";
    for (double p : ps) {
      double truth = p <= knee ? base : base + slope * (p - knee);
      pmnf::Measurement m{{{"p", p}}, {}};
      for (int r = 0; r < 5; ++r) {
        double eps;
        do eps = 0.05 * rng.normal();
        while (std::fabs(eps) > 0.15);
        m.samples.push_back(truth * (1 + eps));
      }
      set.points.push_back(m);
    }
    ms.sets = {set};
    volume::DependencyReport deps;
    volume::DependencyRecord rec;
    rec.function = "solver";
    rec.dep_params = rec.own_params = {"p"};
    rec.structure.additive = {{"p"}};
    deps.records = {rec};
    deps.params = {"p"};
    pipeline::ModelOptions mo;
    mo.mode = pipeline::Mode::Both;
    mo.cov_threshold = std::numeric_limits<double>::infinity();
    auto run = pipeline::model_all(ms, &deps, mo);
    auto rep = experiment::validate_experiment(run.blackbox, run.guided, &deps, ms);
    const auto& bc = rep.functions.at(0).behavior_change;
    if (bc && bc->param == "p" && bc->split == knee) ++correct;
  }
  report("AC9", correct >= 90, std::to_string(correct) + "/100 trials flagged with the correct split (>= 90)");
}

// Runs every stage once and returns the serialized outputs.
std::vector<std::string> pipeline_outputs(std::uint64_t seed) {
  std::vector<std::string> out;
  auto c = harness::gen_corpus(seed, {20, 3, 2, 0.3});
  out.push_back(c.source);
  out.push_back(harness::to_json(c.truth));
  auto vr = dsl::validate(c.program, &db());
  out.push_back(dsl::to_json(vr));
  auto trace = taint::run(c.program, c.truth.base, db());
  out.push_back(taint::to_json(trace));
  auto deps = volume::analyze(c.program, trace);
  out.push_back(volume::to_json(deps));
  std::map<std::string, std::vector<double>> vals;
  for (const auto& p : c.truth.params) vals[p] = {2, 4, 8, 16, 32};
  auto d = experiment::design(vals, &deps, 5);
  out.push_back(experiment::to_json(d));
  auto ms = harness::gen_measurements(c.truth.functions, d, {0.05, harness::Contamination{"p", 0.2}}, seed);
  out.push_back(experiment::to_csv(ms));
  out.push_back(experiment::to_json(experiment::cov_filter(ms)));
  pipeline::ModelOptions mo;
  mo.mode = pipeline::Mode::Both;
  auto run = pipeline::model_all(ms, &deps, mo);
  out.push_back(pipeline::to_json(run));
  out.push_back(experiment::to_json(experiment::classify(c.program, vr, deps, db())));
  experiment::Measurements modeled;
  modeled.params = ms.params;
  for (const auto& s : ms.sets)
    if (run.guided.count({s.function, s.path})) modeled.sets.push_back(s);
  out.push_back(experiment::to_json(experiment::validate_experiment(run.blackbox, run.guided, &deps, modeled)));
  return out;
}

void ac10_determinism() {
  const char* stages[] = {"corpus", "groundtruth", "validate", "trace", "deps", "design",
                          "measurements", "cov_filter", "models", "classification", "validity"};
  std::string mismatched;
  for (std::uint64_t seed : {7u, 19u}) {
    auto a = pipeline_outputs(seed);
    auto b = pipeline_outputs(seed);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) mismatched += std::string(" ") + stages[i];
  }
  report("AC10", mismatched.empty(),
         mismatched.empty() ? "11 stages byte-identical across repeated runs (seeds 7, 19)" : "differs:" + mismatched);
}

}  // namespace

int main() {
  std::cout.setf(std::ios::fmtflags(0), std::ios::floatfield);
  std::cout.precision(4);
  std::vector<std::pair<const char*, std::function<void()>>> checks{
      {"AC1", ac1_taint_soundness}, {"AC2", ac2_volume_bound},     {"AC3", ac3_pmnf_recovery},
      {"AC4", ac4_reference_models},    {"AC5", ac5_constant_pruning}, {"AC6", ac6_design_reduction},
      {"AC7", ac7_classification},  {"AC8", ac8_contention},       {"AC9", ac9_behavior_change},
      {"AC10", ac10_determinism}};
  for (const auto& [id, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("exception: ") + e.what());
    }
  }
  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : "all criteria passed") << std::endl;
  return failures ? 1 : 0;
}
