// taintperf: command-line front end for the analysis and modeling pipeline.
//
// Exit codes: 0 success, 1 error, 2 success with analysis warnings (recursive calls).

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "taintperf/experiment.hpp"
#include "taintperf/harness.hpp"
#include "taintperf/libdb.hpp"
#include "taintperf/parser.hpp"
#include "taintperf/pipeline.hpp"
#include "taintperf/taint.hpp"
#include "taintperf/util.hpp"
#include "taintperf/validate.hpp"
#include "taintperf/volume.hpp"

namespace tp = taintperf;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kWarnings = 2;

tp::libdb::LibraryDB load_libdb(const std::string& path) {
  return path.empty() ? tp::libdb::default_db() : tp::libdb::load_db(path);
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    tp::write_file(path, content);
}

std::optional<tp::volume::DependencyReport> load_deps(const std::string& path) {
  if (path.empty() || path == "none") return std::nullopt;
  return tp::volume::deps_from_json(tp::read_file(path));
}

tp::dsl::Program load_program(const std::string& path, const tp::libdb::LibraryDB& db) {
  auto prog = tp::dsl::parse_file(path);
  auto rep = tp::dsl::validate(prog, &db);
  if (!rep.ok()) {
    for (const auto& e : rep.errors)
      std::cerr << path << ":" << e.pos.line << ":" << e.pos.column << ": error: " << e.message << "\n";
    throw std::runtime_error(std::to_string(rep.errors.size()) + " validation error(s) in " + path);
  }
  return prog;
}

struct Args {
  std::string program, libdb, out, trace, deps, measurements, models, truth, design_path, contaminate;
  std::vector<std::string> params, values;
  bool no_implicit = false;
  std::uint64_t max_trips = 100'000'000;
  std::string mode = "guided";
  double cov_threshold = 0.1;
  int reps = 5;
  std::uint64_t seed = 1;
  int functions = 20, nparams = 3, depth = 2;
  double constant_share = 0.3, sigma = 0.05;
  std::string out_dir = ".";
  std::string filter_out;
};

int cmd_check(const Args& a) {
  auto db = load_libdb(a.libdb);
  auto prog = tp::dsl::parse_file(a.program);
  auto rep = tp::dsl::validate(prog, &db);
  emit(a.out, tp::dsl::to_json(rep));
  std::cerr << rep.errors.size() << " error(s), " << rep.warnings.size() << " warning(s), "
            << rep.constant_loops.size() << " constant and " << rep.dynamic_loops.size() << " dynamic loop(s)\n";
  if (!rep.ok()) return kError;
  return rep.warnings.empty() ? kOk : kWarnings;
}

int cmd_run(const Args& a) {
  auto db = load_libdb(a.libdb);
  auto prog = load_program(a.program, db);
  tp::taint::ParamValues values;
  for (const auto& p : a.params) values.insert(tp::pipeline::parse_assignment(p));
  tp::taint::RunOptions opts;
  opts.implicit_flows = !a.no_implicit;
  opts.max_trip_count = a.max_trips;
  auto trace = tp::taint::run(prog, values, db, opts);
  emit(a.out, tp::taint::to_json(trace));
  std::size_t tainted = 0;
  for (const auto& [k, l] : trace.loops) tainted += l.labels.empty() ? 0 : 1;
  std::cerr << trace.loops.size() << " loop site(s), " << tainted << " parameter-dependent, "
            << trace.unvisited_tainted_branches().size() << " unvisited tainted branch arm(s)\n";
  for (const auto& w : trace.warnings) std::cerr << "warning: " << w << "\n";
  return trace.warnings.empty() ? kOk : kWarnings;
}

int cmd_analyze(const Args& a) {
  auto db = load_libdb(a.libdb);
  auto prog = load_program(a.program, db);
  auto trace = tp::taint::trace_from_json(tp::read_file(a.trace));
  auto deps = tp::volume::analyze(prog, trace);
  emit(a.out, tp::volume::to_json(deps));
  for (const auto& r : deps.records)
    std::cerr << r.function << " [" << tp::taint::path_string(r.path) << "]: {" << tp::join(r.dep_params) << "}"
              << (r.structure.over_approx ? " (over-approximated)" : "") << "\n";
  return kOk;
}

int cmd_design(const Args& a) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& v : a.values) values.insert(tp::pipeline::parse_value_list(v));
  if (values.empty()) throw std::invalid_argument("design needs at least one --values name=v1,v2,...");
  auto deps = load_deps(a.deps);
  auto d = tp::experiment::design(values, deps ? &*deps : nullptr, a.reps);
  emit(a.out, tp::experiment::to_json(d));
  std::size_t full = 1;
  for (const auto& [p, v] : values) full *= v.size();
  std::cerr << d.configs.size() << " configuration(s) (full cross product: " << full << "), " << a.reps
            << " repetition(s) each\n";
  return kOk;
}

int cmd_model(const Args& a) {
  auto deps = load_deps(a.deps);
  auto ms = tp::experiment::ingest(a.measurements);
  for (const auto& w : ms.warnings) std::cerr << "warning: " << w << "\n";
  tp::pipeline::ModelOptions opts;
  opts.mode = tp::pipeline::parse_mode(a.mode);
  opts.cov_threshold = a.cov_threshold;
  if (opts.mode != tp::pipeline::Mode::BlackBox && !deps)
    throw std::invalid_argument("guided modeling needs --deps (use --mode blackbox to model without it)");
  auto run = tp::pipeline::model_all(ms, deps ? &*deps : nullptr, opts);
  emit(a.out, tp::pipeline::to_json(run));
  auto print = [](const char* tag, const tp::experiment::ModelMap& m) {
    for (const auto& [k, model] : m)
      std::cerr << tag << " " << tp::experiment::key_string(k) << ": " << model.formula() << "\n";
  };
  print("guided", run.guided);
  print("blackbox", run.blackbox);
  for (const auto& e : run.excluded) std::cerr << "excluded " << tp::experiment::key_string(e.key) << ": " << e.reason << "\n";
  for (const auto& [k, e] : run.errors) std::cerr << "error " << tp::experiment::key_string(k) << ": " << e << "\n";
  return run.errors.empty() ? kOk : kError;
}

int cmd_classify(const Args& a) {
  auto db = load_libdb(a.libdb);
  auto prog = load_program(a.program, db);
  auto deps = load_deps(a.deps);
  if (!deps) throw std::invalid_argument("classify needs --deps");
  auto vr = tp::dsl::validate(prog, &db);
  auto c = tp::experiment::classify(prog, vr, *deps, db);
  emit(a.out, tp::experiment::to_json(c));
  if (!a.filter_out.empty()) {
    json f{{"schema_version", 1}, {"kind", "filter"}, {"include", c.filter()}};
    tp::write_file(a.filter_out, f.dump(2) + "\n");
  }
  using FC = tp::experiment::FunctionClass;
  std::cerr << c.count(FC::StaticallyPruned) << " statically pruned, " << c.count(FC::DynamicallyPruned)
            << " dynamically pruned, " << c.count(FC::Kernel) << " kernel(s), " << c.count(FC::CommRoutine)
            << " communication routine(s), " << c.count(FC::Extern) << " library routine(s)\n";
  return kOk;
}

int cmd_validate(const Args& a) {
  auto deps = load_deps(a.deps);
  auto models = tp::pipeline::models_from_json(tp::read_file(a.models));
  if (models.mode != tp::pipeline::Mode::Both)
    throw std::invalid_argument("validate needs models produced with --mode both");
  auto ms = tp::experiment::ingest(a.measurements);
  tp::experiment::Measurements modeled;
  modeled.params = ms.params;
  for (const auto& s : ms.sets)
    if (models.guided.count({s.function, s.path})) modeled.sets.push_back(s);
  tp::experiment::ValidityOptions opts;
  opts.cov_threshold = a.cov_threshold;
  auto rep = tp::experiment::validate_experiment(models.blackbox, models.guided, deps ? &*deps : nullptr, modeled, opts);
  json j = json::parse(tp::experiment::to_json(rep));
  json excl = json::array();
  for (const auto& e : models.excluded)
    excl.push_back({{"function", e.key.function}, {"call_path", e.key.path}, {"reason", e.reason}});
  j["excluded_by_cov_filter"] = excl;
  emit(a.out, j.dump(2) + "\n");
  std::size_t flagged = 0;
  for (const auto& f : rep.functions) {
    if (!f.flagged()) continue;
    ++flagged;
    std::cerr << tp::experiment::key_string(f.key) << ":";
    for (const auto& c : f.contention) std::cerr << " contention(" << c.param << ", rho=" << c.rho << ")";
    if (f.behavior_change)
      std::cerr << " behavior-change(" << f.behavior_change->param << " <= " << f.behavior_change->split << ")";
    if (!f.cov_violations.empty()) std::cerr << " cov(" << f.cov_violations.size() << " config(s))";
    if (!f.unvisited_branches.empty()) std::cerr << " unvisited-branches(" << f.unvisited_branches.size() << ")";
    std::cerr << "\n";
  }
  std::cerr << flagged << " of " << rep.functions.size() << " function(s) flagged\n";
  return kOk;
}

int cmd_synth_corpus(const Args& a) {
  tp::harness::CorpusSpec spec{a.functions, a.nparams, a.depth, a.constant_share};
  auto c = tp::harness::gen_corpus(a.seed, spec);
  std::filesystem::create_directories(a.out_dir);
  auto dir = std::filesystem::path(a.out_dir);
  tp::write_file((dir / "program.ptl").string(), c.source);
  tp::write_file((dir / "groundtruth.json").string(), tp::harness::to_json(c.truth));
  std::string params;
  for (const auto& [p, v] : c.truth.base) params += " --param " + p + "=" + tp::format_number(v);
  std::cerr << "wrote " << (dir / "program.ptl").string() << " (" << c.truth.functions.size() << " functions, "
            << c.truth.constant_count() << " constant); base run:" << params << "\n";
  return kOk;
}

int cmd_synth_measurements(const Args& a) {
  auto gt = tp::harness::truth_from_json(tp::read_file(a.truth));
  auto d = tp::experiment::design_from_json(tp::read_file(a.design_path));
  tp::harness::NoiseSpec noise;
  noise.sigma = a.sigma;
  if (!a.contaminate.empty()) {
    auto [param, amp] = tp::pipeline::parse_assignment(a.contaminate);
    noise.contamination = tp::harness::Contamination{param, amp};
  }
  auto ms = tp::harness::gen_measurements(gt.functions, d, noise, a.seed);
  emit(a.out, tp::experiment::to_csv(ms));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Taint-guided empirical performance modeling"};
  app.require_subcommand(1);
  Args a;

  auto* check = app.add_subcommand("check", "Validate a program and list its loops");
  check->add_option("program", a.program, "PTL program")->required()->check(CLI::ExistingFile);
  check->add_option("--libdb", a.libdb, "Library database (JSON)");
  check->add_option("--out", a.out, "Output file (default: stdout)");

  auto* run = app.add_subcommand("run", "Execute a program with taint tracking");
  run->add_option("program", a.program, "PTL program")->required()->check(CLI::ExistingFile);
  run->add_option("--param", a.params, "Parameter value name=value (repeatable)");
  run->add_option("--libdb", a.libdb, "Library database (JSON)");
  run->add_option("--out", a.out, "Trace output (default: stdout)");
  run->add_flag("--no-implicit-flows", a.no_implicit, "Do not taint writes of untaken branches");
  run->add_option("--max-trips", a.max_trips, "Per-loop iteration guard");

  auto* analyze = app.add_subcommand("analyze", "Derive dependency structure from a trace");
  analyze->add_option("trace", a.trace, "Trace JSON from run")->required()->check(CLI::ExistingFile);
  analyze->add_option("program", a.program, "PTL program")->required()->check(CLI::ExistingFile);
  analyze->add_option("--libdb", a.libdb, "Library database (JSON)");
  analyze->add_option("--out", a.out, "Dependency report output (default: stdout)");

  auto* design = app.add_subcommand("design", "Generate an experiment design");
  design->add_option("--deps", a.deps, "Dependency report, or 'none' for a full cross product")->required();
  design->add_option("--values", a.values, "Parameter values name=v1,v2,... (repeatable)")->required();
  design->add_option("--reps", a.reps, "Repetitions per configuration");
  design->add_option("--out", a.out, "Design output (default: stdout)");

  auto* model = app.add_subcommand("model", "Fit performance models to measurements");
  model->add_option("measurements", a.measurements, "Measurement CSV")->required()->check(CLI::ExistingFile);
  model->add_option("--deps", a.deps, "Dependency report, or 'none'");
  model->add_option("--mode", a.mode, "guided, blackbox or both")->check(CLI::IsMember({"guided", "blackbox", "both"}));
  model->add_option("--cov-threshold", a.cov_threshold, "Exclude functions whose sample CoV exceeds this (inf disables)");
  model->add_option("--out", a.out, "Models output (default: stdout)");

  auto* classify = app.add_subcommand("classify", "Classify functions and emit an instrumentation filter");
  classify->add_option("program", a.program, "PTL program")->required()->check(CLI::ExistingFile);
  classify->add_option("--deps", a.deps, "Dependency report")->required();
  classify->add_option("--libdb", a.libdb, "Library database (JSON)");
  classify->add_option("--out", a.out, "Classification output (default: stdout)");
  classify->add_option("--filter", a.filter_out, "Write the instrumentation filter here");

  auto* validate = app.add_subcommand("validate", "Check experiment validity");
  validate->add_option("measurements", a.measurements, "Measurement CSV")->required()->check(CLI::ExistingFile);
  validate->add_option("--models", a.models, "Models produced with --mode both")->required()->check(CLI::ExistingFile);
  validate->add_option("--deps", a.deps, "Dependency report");
  validate->add_option("--cov-threshold", a.cov_threshold, "CoV threshold");
  validate->add_option("--out", a.out, "Validity output (default: stdout)");

  auto* synth = app.add_subcommand("synth", "Generate synthetic programs and measurements");
  synth->require_subcommand(1);
  auto* corpus = synth->add_subcommand("corpus", "Generate a program with ground truth");
  corpus->add_option("--seed", a.seed, "Random seed");
  corpus->add_option("--functions", a.functions, "Number of functions");
  corpus->add_option("--params", a.nparams, "Number of parameters (1-6)");
  corpus->add_option("--depth", a.depth, "Maximum nesting depth (1-4)");
  corpus->add_option("--constant-share", a.constant_share, "Share of constant functions");
  corpus->add_option("--out-dir", a.out_dir, "Output directory");
  auto* meas = synth->add_subcommand("measurements", "Generate noisy measurements from ground truth");
  meas->add_option("--truth", a.truth, "groundtruth.json")->required()->check(CLI::ExistingFile);
  meas->add_option("--design", a.design_path, "design.json")->required()->check(CLI::ExistingFile);
  meas->add_option("--sigma", a.sigma, "Relative noise standard deviation");
  meas->add_option("--seed", a.seed, "Random seed");
  meas->add_option("--contaminate", a.contaminate, "Contamination param=amplitude, e.g. p=0.2");
  meas->add_option("--out", a.out, "CSV output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check(a);
    if (run->parsed()) return cmd_run(a);
    if (analyze->parsed()) return cmd_analyze(a);
    if (design->parsed()) return cmd_design(a);
    if (model->parsed()) return cmd_model(a);
    if (classify->parsed()) return cmd_classify(a);
    if (validate->parsed()) return cmd_validate(a);
    if (corpus->parsed()) return cmd_synth_corpus(a);
    if (meas->parsed()) return cmd_synth_measurements(a);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
