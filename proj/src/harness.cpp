#include "taintperf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "taintperf/parser.hpp"
#include "taintperf/util.hpp"

namespace taintperf::harness {

using experiment::FunctionClass;
using pmnf::Factor;
using pmnf::Rational;
using pmnf::Term;

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("index() of an empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

double Rng::normal() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  // Marsaglia polar method
  double u, v, s;
  do {
    u = uniform(-1, 1);
    v = uniform(-1, 1);
    s = u * u + v * v;
  } while (s >= 1 || s == 0);
  double f = std::sqrt(-2 * std::log(s) / s);
  spare_ = v * f;
  return u * f;
}

std::size_t GroundTruth::constant_count() const {
  return static_cast<std::size_t>(
      std::count_if(functions.begin(), functions.end(), [](const FunctionTruth& f) { return f.constant(); }));
}

const FunctionTruth* GroundTruth::find(const std::string& name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

namespace {

const char* const kParamNames[] = {"size", "p", "n", "m", "k", "t"};
const double kBase[] = {6, 4, 5, 4, 3, 3};

struct Emitted {
  std::string body;
  FunctionTruth truth;
};

class Generator {
public:
  Generator(std::uint64_t seed, const CorpusSpec& spec) : rng_(seed), spec_(spec) {
    for (int i = 0; i < spec.params; ++i) params_.push_back(kParamNames[i]);
  }

  Corpus run(std::uint64_t seed) {
    const int total = spec_.functions;
    const int constants = static_cast<int>(std::lround(spec_.constant_share * total));
    std::vector<bool> is_const(static_cast<std::size_t>(total), false);
    for (int i = 0; i < constants; ++i) is_const[static_cast<std::size_t>(i)] = true;
    // Deterministic Fisher-Yates so constant functions are interleaved with kernels.
    for (std::size_t i = is_const.size(); i > 1; --i) {
      std::size_t j = rng_.index(i);
      bool tmp = is_const[i - 1];
      is_const[i - 1] = is_const[j];
      is_const[j] = tmp;
    }

    std::ostringstream src;
    for (const auto& p : params_) src << (p == "p" ? "implicit param p;\n" : "param " + p + ";\n");
    src << "\n";
    Corpus c;
    c.truth.seed = seed;
    c.truth.spec = spec_;
    c.truth.params = params_;
    for (std::size_t i = 0; i < params_.size(); ++i) c.truth.base[params_[i]] = kBase[i];
    for (int i = 0; i < total; ++i) {
      char name[16];
      std::snprintf(name, sizeof name, "f%02d", i);
      Emitted e = is_const[static_cast<std::size_t>(i)] ? constant_fn() : kernel_fn();
      e.truth.name = name;
      src << "fn " << name << "(r) {\n" << e.body << "}\n\n";
      c.truth.functions.push_back(std::move(e.truth));
    }
    src << "fn main() {\n";
    for (const auto& p : params_)
      if (p != "p") src << "  source(" << p << ", \"" << p << "\");\n";
    src << "  let r = 1;\n";
    if (has_p()) src << "  extern(\"MPI_Comm_size\", r);\n";
    for (const auto& f : c.truth.functions) src << "  " << f.name << "(r);\n";
    src << "}\n";
    c.source = src.str();
    c.program = dsl::parse(c.source);

    // Call paths of the direct calls from main.
    const auto* main_fn = c.program.find_function("main");
    for (const auto& s : main_fn->body)
      if (const auto* es = std::get_if<dsl::ExprStmt>(&s.node))
        if (const auto* call = std::get_if<dsl::Call>(&es->expr->node))
          for (auto& f : c.truth.functions)
            if (f.name == call->callee) f.path = {es->expr->id};
    return c;
  }

private:
  bool has_p() const { return std::find(params_.begin(), params_.end(), "p") != params_.end(); }
  static std::string var(const std::string& p) { return p == "p" ? "r" : p; }

  std::string pick_param() { return params_[rng_.index(params_.size())]; }

  std::vector<std::string> pick_distinct(std::size_t k) {
    std::vector<std::string> pool = params_, out;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = rng_.index(pool.size());
      out.push_back(pool[j]);
      pool.erase(pool.begin() + static_cast<long>(j));
    }
    return out;
  }

  // Loop bound expression whose value follows x^e.
  static std::string bound(const std::string& p, Rational e) {
    std::string v = var(p);
    if (e == Rational(1)) return v;
    if (e == Rational(2)) return v + " * " + v;
    if (e == Rational(3, 2)) return "floor(pow(" + v + ", 1.5))";
    if (e == Rational(1, 2)) return "floor(sqrt(" + v + "))";
    throw std::logic_error("unsupported exponent");
  }

  pmnf::PerfModel model(double c0, std::vector<std::pair<double, Term>> terms) {
    pmnf::PerfModel m;
    m.coefficients.push_back(c0);
    for (auto& [c, t] : terms) {
      m.hypothesis.terms.push_back(t);
      m.coefficients.push_back(c);
    }
    std::set<std::string> ps;
    for (const auto& t : m.hypothesis.terms)
      for (const auto& f : t.factors) ps.insert(f.param);
    m.params.assign(ps.begin(), ps.end());
    return m;
  }

  double coef() { return std::exp(rng_.uniform(std::log(1e-3), std::log(1e-1))); }

  Emitted constant_fn() {
    Emitted e;
    static const char* kinds[] = {"getter", "constant_loop", "untainted_while", "tainted_if", "rank_query"};
    std::size_t k = rng_.index(has_p() ? 5 : 4);
    e.truth.kind = kinds[k];
    e.truth.cls = k == 2 ? FunctionClass::DynamicallyPruned : FunctionClass::StaticallyPruned;
    e.truth.formula = model(rng_.uniform(1, 10), {});
    switch (k) {
      case 0:
        e.body = "  let v = " + params_[0] + " * 2 + 1;\n  return v;\n";
        break;
      case 1:
        e.body = "  let acc = 0;\n  for i in 0..8 {\n    acc = acc + i;\n  }\n  return acc;\n";
        break;
      case 2:
        e.body =
            "  let lim = 4 + 3;\n  let i = 0;\n  let acc = 0;\n  while i < lim {\n    acc = acc + i;\n    i = i + 1;\n  }\n"
            "  return acc;\n";
        break;
      case 3:
        e.body = "  let v = 0;\n  if " + var(pick_param()) + " > 3 {\n    v = 1;\n  } else {\n    v = 2;\n  }\n  return v;\n";
        break;
      default:
        e.body = "  let me = 0;\n  extern(\"MPI_Comm_rank\", me);\n  return me;\n";
        break;
    }
    return e;
  }

  Emitted kernel_fn() {
    // Weighted choice among kernel shapes that the parameter count allows.
    std::vector<std::pair<std::string, int>> shapes{{"single", 3}, {"log", 1}, {"triangular", 1}, {"guarded", 1}};
    if (params_.size() >= 2) shapes.push_back({"additive", 2});
    if (params_.size() >= 2 && spec_.depth >= 2) shapes.push_back({"multiplicative", 2});
    if (has_p() && params_.size() >= 2) shapes.push_back({"comm", 1});
    int total = 0;
    for (const auto& s : shapes) total += s.second;
    int roll = static_cast<int>(rng_.index(static_cast<std::size_t>(total)));
    std::string kind;
    for (const auto& s : shapes) {
      if (roll < s.second) {
        kind = s.first;
        break;
      }
      roll -= s.second;
    }

    static const Rational kExps[] = {Rational(1), Rational(2), Rational(3, 2), Rational(1, 2)};
    Emitted e;
    e.truth.kind = kind;
    e.truth.cls = FunctionClass::Kernel;
    auto& t = e.truth;
    std::string body = "  let acc = 0;\n";
    if (kind == "single") {
      std::string x = pick_param();
      Rational ex = kExps[rng_.index(4)];
      body += "  for i in 0.." + bound(x, ex) + " {\n    acc = acc + i;\n  }\n";
      t.deps = {x};
      t.additive = {{x}};
      t.formula = model(rng_.uniform(0.5, 2), {{coef(), Term{{Factor{x, ex, 0}}}}});
    } else if (kind == "log") {
      std::string x = pick_param();
      body += "  let j = 1;\n  while j < " + var(x) + " {\n    acc = acc + 1;\n    j = j * 2;\n  }\n";
      t.deps = {x};
      t.additive = {{x}};
      t.formula = model(rng_.uniform(0.5, 2), {{coef(), Term{{Factor{x, Rational(0), 1}}}}});
    } else if (kind == "triangular") {
      std::string x = pick_param();
      body += "  for i in 0.." + var(x) +
              " {\n    let j = 0;\n    while j < i {\n      acc = acc + 1;\n      j = j + 1;\n    }\n  }\n";
      t.deps = {x};
      t.additive = {{x}};
      t.formula = model(rng_.uniform(0.5, 2), {{coef(), Term{{Factor{x, Rational(2), 0}}}}});
    } else if (kind == "guarded") {
      std::string x = pick_param();
      // Occasionally guard on another parameter; the guard can never flip, so that parameter is an
      // over-approximation the analysis is expected to report.
      std::string g = x;
      if (params_.size() >= 2 && rng_.index(3) == 0)
        while (g == x) g = pick_param();
      body += "  if " + var(g) + " > 0 {\n    for i in 0.." + var(x) + " {\n      acc = acc + i;\n    }\n  } else {\n    acc = 0;\n  }\n";
      t.deps = {x};
      t.additive = {{x}};
      t.formula = model(rng_.uniform(0.5, 2), {{coef(), Term{{Factor{x, Rational(1), 0}}}}});
    } else if (kind == "additive") {
      auto xs = pick_distinct(2);
      Rational a = kExps[rng_.index(4)], b = kExps[rng_.index(4)];
      body += "  for i in 0.." + bound(xs[0], a) + " {\n    acc = acc + i;\n  }\n";
      body += "  for i in 0.." + bound(xs[1], b) + " {\n    acc = acc + i;\n  }\n";
      t.deps = {xs[0], xs[1]};
      t.additive = {{xs[0]}, {xs[1]}};
      std::sort(t.additive.begin(), t.additive.end());
      t.formula = model(rng_.uniform(0.5, 2),
                        {{coef(), Term{{Factor{xs[0], a, 0}}}}, {coef(), Term{{Factor{xs[1], b, 0}}}}});
    } else if (kind == "multiplicative") {
      std::size_t max_d = std::min<std::size_t>(static_cast<std::size_t>(spec_.depth), params_.size());
      std::size_t d = 2 + rng_.index(max_d - 1);
      auto xs = pick_distinct(d);
      Term term;
      std::string indent = "  ";
      for (std::size_t l = 0; l < d; ++l) {
        Rational ex = d == 2 && l == 0 && rng_.index(2) == 0 ? Rational(2) : Rational(1);
        body += indent + "for i" + std::to_string(l) + " in 0.." + bound(xs[l], ex) + " {\n";
        indent += "  ";
        term.factors.push_back(Factor{xs[l], ex, 0});
      }
      body += indent + "acc = acc + 1;\n";
      for (std::size_t l = d; l > 0; --l) {
        indent.resize(indent.size() - 2);
        body += indent + "}\n";
      }
      std::sort(term.factors.begin(), term.factors.end());
      t.deps = ParamSet(xs.begin(), xs.end());
      t.multiplicative = {t.deps};
      t.formula = model(rng_.uniform(0.5, 2), {{coef(), term}});
    } else {  // comm
      t.cls = FunctionClass::CommRoutine;
      if (rng_.index(2) == 0) {
        std::string x = pick_distinct(params_.size())[0];
        while (x == "p") x = pick_param();
        body += "  extern(\"MPI_Send\", 1, " + var(x) + ");\n";
        t.deps = {"p", x};
        t.multiplicative = {t.deps};
        Term term{{Factor{"p", Rational(0), 1}, Factor{x, Rational(1), 0}}};
        std::sort(term.factors.begin(), term.factors.end());
        t.formula = model(rng_.uniform(0.5, 2), {{coef(), term}});
        t.kind = "comm_send";
      } else {
        body += "  extern(\"MPI_Allreduce\", 1, 1);\n";
        t.deps = {"p"};
        t.additive = {{"p"}};
        t.formula = model(rng_.uniform(0.5, 2), {{coef(), Term{{Factor{"p", Rational(0), 1}}}}});
        t.kind = "comm_allreduce";
      }
    }
    body += "  return acc;\n";
    e.body = body;
    return e;
  }

  Rng rng_;
  CorpusSpec spec_;
  std::vector<std::string> params_;
};

}  // namespace

Corpus gen_corpus(std::uint64_t seed, const CorpusSpec& spec) {
  if (spec.functions < 1) throw std::invalid_argument("corpus needs at least one function");
  if (spec.params < 1 || spec.params > 6) throw std::invalid_argument("corpus supports 1 to 6 parameters");
  if (spec.depth < 1 || spec.depth > 4) throw std::invalid_argument("nesting depth must be within 1..4");
  if (spec.depth > spec.params)
    throw std::invalid_argument("nesting depth " + std::to_string(spec.depth) + " needs at least as many parameters, got " +
                                std::to_string(spec.params));
  if (!(spec.constant_share >= 0 && spec.constant_share <= 1))
    throw std::invalid_argument("constant share must be within [0, 1]");
  return Generator(seed, spec).run(seed);
}

experiment::Measurements gen_measurements(const std::vector<FunctionTruth>& functions, const experiment::Design& design,
                                          const NoiseSpec& noise, std::uint64_t seed) {
  if (!(noise.sigma >= 0)) throw std::invalid_argument("noise sigma must be non-negative");
  Rng rng(seed);
  experiment::Measurements out;
  out.params = design.params;
  double cmax = 0;
  if (noise.contamination) {
    for (const auto& c : design.configs) {
      auto it = c.find(noise.contamination->param);
      if (it == c.end()) throw std::invalid_argument("contamination parameter not in the design");
      cmax = std::max(cmax, it->second);
    }
    if (cmax <= 1) throw std::invalid_argument("contamination parameter needs values above 1");
  }
  for (const auto& f : functions) {
    pmnf::MeasurementSet ms;
    ms.function = f.name;
    ms.path = f.path;
    for (const auto& cfg : design.configs) {
      double truth = pmnf::evaluate(f.formula, cfg);
      double extra = 0;
      if (noise.contamination) {
        double l = std::log2(cfg.at(noise.contamination->param)) / std::log2(cmax);
        extra = noise.contamination->amplitude * truth * l * l;
      }
      pmnf::Measurement m{cfg, {}};
      for (int r = 0; r < design.repetitions; ++r) {
        double v;
        do {
          double eps;
          do {
            eps = noise.sigma * rng.normal();
          } while (std::fabs(eps) > 3 * noise.sigma);
          v = truth * (1 + eps) + extra;
        } while (v < 0);
        m.samples.push_back(v);
      }
      ms.points.push_back(std::move(m));
    }
    out.sets.push_back(std::move(ms));
  }
  std::sort(out.sets.begin(), out.sets.end(), [](const pmnf::MeasurementSet& a, const pmnf::MeasurementSet& b) {
    return std::tie(a.function, a.path) < std::tie(b.function, b.path);
  });
  return out;
}

std::string to_json(const GroundTruth& gt) {
  using nlohmann::json;
  json fns = json::array();
  for (const auto& f : gt.functions)
    fns.push_back({{"name", f.name},
                   {"kind", f.kind},
                   {"class", experiment::class_name(f.cls)},
                   {"deps", f.deps},
                   {"additive", f.additive},
                   {"multiplicative", f.multiplicative},
                   {"formula", f.formula.formula()},
                   {"model", json::parse(pmnf::to_json(f.formula))},
                   {"call_path", f.path}});
  json j{{"schema_version", 1},
         {"kind", "groundtruth"},
         {"seed", gt.seed},
         {"spec",
          {{"functions", gt.spec.functions},
           {"params", gt.spec.params},
           {"depth", gt.spec.depth},
           {"constant_share", gt.spec.constant_share}}},
         {"params", gt.params},
         {"base", gt.base},
         {"constant_functions", gt.constant_count()},
         {"functions", fns}};
  return j.dump(2) + "\n";
}

GroundTruth truth_from_json(const std::string& text) {
  using nlohmann::json;
  json j = json::parse(text);
  if (j.value("kind", "") != "groundtruth") throw std::invalid_argument("not a ground-truth file");
  GroundTruth gt;
  gt.seed = j.at("seed").get<std::uint64_t>();
  const auto& s = j.at("spec");
  gt.spec = {s.at("functions").get<int>(), s.at("params").get<int>(), s.at("depth").get<int>(),
             s.at("constant_share").get<double>()};
  gt.params = j.at("params").get<std::vector<std::string>>();
  gt.base = j.at("base").get<pmnf::Config>();
  for (const auto& f : j.at("functions")) {
    FunctionTruth t;
    t.name = f.at("name").get<std::string>();
    t.kind = f.at("kind").get<std::string>();
    const auto cls = f.at("class").get<std::string>();
    for (auto c : {FunctionClass::StaticallyPruned, FunctionClass::DynamicallyPruned, FunctionClass::Kernel,
                   FunctionClass::CommRoutine, FunctionClass::Extern})
      if (experiment::class_name(c) == cls) t.cls = c;
    t.deps = f.at("deps").get<ParamSet>();
    t.additive = f.at("additive").get<std::vector<ParamSet>>();
    t.multiplicative = f.at("multiplicative").get<std::vector<ParamSet>>();
    t.formula = pmnf::model_from_json(f.at("model").dump());
    t.path = f.at("call_path").get<taint::CallPath>();
    gt.functions.push_back(std::move(t));
  }
  return gt;
}

}  // namespace taintperf::harness
