#include "taintperf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "taintperf/util.hpp"

namespace taintperf::experiment {

using nlohmann::json;

std::string key_string(const FnKey& key) {
  return key.path.empty() ? key.function : key.function + "@" + taint::path_string(key.path);
}

// ---------------------------------------------------------------------------
// Design

Design design(const std::map<std::string, std::vector<double>>& values, const std::vector<ParamSet>* groups,
              int repetitions) {
  Design d;
  d.repetitions = repetitions;
  for (const auto& [p, vals] : values) {
    if (vals.empty()) throw std::invalid_argument("no values given for parameter '" + p + "'");
    d.params.push_back(p);
    d.base[p] = *std::min_element(vals.begin(), vals.end());
  }
  std::set<Config> configs;
  auto cross = [&](const std::vector<std::string>& over) {
    std::vector<Config> acc{d.base};
    for (const auto& p : over) {
      std::vector<Config> next;
      for (const auto& c : acc)
        for (double v : values.at(p)) {
          Config n = c;
          n[p] = v;
          next.push_back(std::move(n));
        }
      acc = std::move(next);
    }
    configs.insert(acc.begin(), acc.end());
  };
  if (!groups) {
    cross(d.params);
  } else {
    std::set<std::string> in_group;
    for (const auto& g : *groups) {
      std::vector<std::string> members;
      for (const auto& p : g)
        if (values.count(p)) members.push_back(p);
      if (members.size() < 2) continue;
      cross(members);
      in_group.insert(members.begin(), members.end());
    }
    for (const auto& p : d.params)
      if (!in_group.count(p)) cross({p});
  }
  d.configs.assign(configs.begin(), configs.end());
  return d;
}

Design design(const std::map<std::string, std::vector<double>>& values, const volume::DependencyReport* deps,
              int repetitions) {
  if (!deps) return design(values, static_cast<const std::vector<ParamSet>*>(nullptr), repetitions);
  std::vector<ParamSet> groups;
  for (const auto& r : deps->records)
    for (const auto& g : r.structure.multiplicative)
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  return design(values, &groups, repetitions);
}

std::string to_json(const Design& d) {
  json j{{"schema_version", 1}, {"kind", "design"}, {"params", d.params}, {"repetitions", d.repetitions},
         {"base", d.base}, {"configs", d.configs}, {"size", d.configs.size()}};
  return j.dump(2) + "\n";
}

Design design_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("kind", "") != "design") throw std::invalid_argument("not a design (missing kind=design)");
  Design d;
  d.params = j.at("params").get<std::vector<std::string>>();
  d.repetitions = j.at("repetitions").get<int>();
  d.base = j.at("base").get<Config>();
  d.configs = j.at("configs").get<std::vector<Config>>();
  return d;
}

// ---------------------------------------------------------------------------
// Measurements

const pmnf::MeasurementSet* Measurements::find(const FnKey& key) const {
  for (const auto& s : sets)
    if (s.function == key.function && s.path == key.path) return &s;
  return nullptr;
}

namespace {

double parse_number(const std::string& field, const std::string& column, std::size_t line) {
  std::string t = trim(field);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size() || !std::isfinite(v))
    throw IngestError("non-numeric value '" + t + "' in column '" + column + "'", line);
  return v;
}

}  // namespace

Measurements ingest_text(const std::string& csv) {
  Measurements out;
  std::vector<std::string> lines = split(csv, '\n');
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) {
    out.warnings.push_back("measurement file is empty");
    return out;
  }
  auto header = split(trim(lines[header_line]), ',');
  for (auto& h : header) h = trim(h);
  const std::size_t ncol = header.size();
  if (ncol < 4 || header[0] != "function" || header[1] != "callpath" || header[ncol - 2] != "rep" ||
      header[ncol - 1] != "value")
    throw IngestError("header must be 'function,callpath,<params...>,rep,value'", header_line + 1);
  out.params.assign(header.begin() + 2, header.end() - 2);
  std::set<std::string> uniq(out.params.begin(), out.params.end());
  if (uniq.size() != out.params.size()) throw IngestError("duplicate parameter column", header_line + 1);

  std::map<FnKey, std::size_t> index;
  std::set<std::tuple<FnKey, Config, double>> seen;
  for (std::size_t ln = header_line + 1; ln < lines.size(); ++ln) {
    std::string row = trim(lines[ln]);
    if (row.empty()) continue;
    auto f = split(row, ',');
    if (f.size() != ncol)
      throw IngestError("expected " + std::to_string(ncol) + " fields, got " + std::to_string(f.size()), ln + 1);
    FnKey key{trim(f[0]), {}};
    if (key.function.empty()) throw IngestError("empty function name", ln + 1);
    try {
      key.path = taint::parse_path(trim(f[1]));
    } catch (const std::invalid_argument& e) {
      throw IngestError(e.what(), ln + 1);
    }
    Config cfg;
    for (std::size_t c = 0; c < out.params.size(); ++c) cfg[out.params[c]] = parse_number(f[c + 2], out.params[c], ln + 1);
    double rep = parse_number(f[ncol - 2], "rep", ln + 1);
    double value = parse_number(f[ncol - 1], "value", ln + 1);
    if (!seen.insert({key, cfg, rep}).second)
      throw IngestError("duplicate measurement for " + key_string(key) + " repetition " + format_number(rep), ln + 1);
    auto [it, fresh] = index.emplace(key, out.sets.size());
    if (fresh) {
      pmnf::MeasurementSet ms;
      ms.function = key.function;
      ms.path = key.path;
      out.sets.push_back(std::move(ms));
    }
    auto& ms = out.sets[it->second];
    auto m = std::find_if(ms.points.begin(), ms.points.end(), [&](const pmnf::Measurement& x) { return x.config == cfg; });
    if (m == ms.points.end()) {
      ms.points.push_back({cfg, {value}});
    } else {
      m->samples.push_back(value);
    }
  }
  std::sort(out.sets.begin(), out.sets.end(), [](const pmnf::MeasurementSet& a, const pmnf::MeasurementSet& b) {
    return std::tie(a.function, a.path) < std::tie(b.function, b.path);
  });
  if (out.sets.empty()) out.warnings.push_back("measurement file has a header but no rows");
  return out;
}

Measurements ingest(const std::string& path) { return ingest_text(read_file(path)); }

std::string to_csv(const Measurements& m) {
  std::string out = "function,callpath";
  for (const auto& p : m.params) out += "," + p;
  out += ",rep,value\n";
  for (const auto& s : m.sets)
    for (const auto& pt : s.points)
      for (std::size_t r = 0; r < pt.samples.size(); ++r) {
        out += s.function + "," + taint::path_string(s.path);
        for (const auto& p : m.params) out += "," + format_number(pt.config.at(p));
        out += "," + std::to_string(r) + "," + format_number(pt.samples[r]) + "\n";
      }
  return out;
}

double coefficient_of_variation(const std::vector<double>& samples) {
  if (samples.empty()) return 0;
  double mean = 0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  double var = 0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(samples.size());
  if (mean == 0) return var == 0 ? 0 : INFINITY;
  return std::sqrt(var) / std::fabs(mean);
}

FilterResult cov_filter(const Measurements& ms, double threshold) {
  FilterResult r;
  r.kept.params = ms.params;
  r.kept.warnings = ms.warnings;
  const bool keep_all = std::isinf(threshold) && threshold > 0;
  for (const auto& s : ms.sets) {
    Exclusion ex{{s.function, s.path}, "", {}};
    if (!keep_all) {
      for (const auto& pt : s.points) {
        double mean = 0;
        for (double v : pt.samples) mean += v;
        if (mean == 0) {
          ex.reason = "zero mean: coefficient of variation undefined";
          ex.configs.push_back({pt.config, INFINITY});
          continue;
        }
        double cov = coefficient_of_variation(pt.samples);
        if (cov > threshold) ex.configs.push_back({pt.config, cov});
      }
    }
    if (ex.configs.empty()) {
      r.kept.sets.push_back(s);
    } else {
      if (ex.reason.empty()) ex.reason = "coefficient of variation above " + format_number(threshold);
      r.excluded.push_back(std::move(ex));
    }
  }
  return r;
}

namespace {
json cov_json(const CovViolation& v) {
  return json{{"config", v.config}, {"cov", std::isfinite(v.cov) ? json(v.cov) : json(nullptr)}};
}
}  // namespace

std::string to_json(const FilterResult& r) {
  json j{{"schema_version", 1}, {"kind", "cov_filter"}};
  j["kept"] = json::array();
  for (const auto& s : r.kept.sets) j["kept"].push_back({{"function", s.function}, {"call_path", s.path}});
  j["excluded"] = json::array();
  for (const auto& e : r.excluded) {
    json c = json::array();
    for (const auto& v : e.configs) c.push_back(cov_json(v));
    j["excluded"].push_back({{"function", e.key.function}, {"call_path", e.key.path}, {"reason", e.reason}, {"configs", c}});
  }
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Classification

std::string class_name(FunctionClass c) {
  switch (c) {
    case FunctionClass::StaticallyPruned: return "statically_pruned";
    case FunctionClass::DynamicallyPruned: return "dynamically_pruned";
    case FunctionClass::Kernel: return "kernel";
    case FunctionClass::CommRoutine: return "comm_routine";
    case FunctionClass::Extern: return "extern";
  }
  return "?";
}

std::vector<std::string> Classification::filter() const {
  std::vector<std::string> out;
  for (const auto& [f, c] : classes)
    if (c == FunctionClass::Kernel || c == FunctionClass::CommRoutine) out.push_back(f);
  return out;
}

std::size_t Classification::count(FunctionClass c) const {
  return static_cast<std::size_t>(
      std::count_if(classes.begin(), classes.end(), [&](const auto& kv) { return kv.second == c; }));
}

Classification classify(const dsl::Program& program, const dsl::ValidationReport& validation,
                        const volume::DependencyReport& deps, const libdb::LibraryDB& db) {
  for (const auto& r : deps.records)
    if (!program.find_function(r.function))
      throw std::invalid_argument("dependency record for unknown function '" + r.function + "'");

  Classification out;
  std::set<std::string> externs;
  for (const auto& fn : program.functions) {
    bool dynamic = false;
    for (const auto& l : validation.loops_of(fn.name)) dynamic = dynamic || !l.trip_count;
    bool relevant_extern = false;
    dsl::walk(
        fn.body, [](const dsl::Stmt&) {},
        [&](const dsl::Expr& e) {
          if (const auto* x = std::get_if<dsl::ExternCall>(&e.node)) {
            externs.insert(x->routine);
            const auto* entry = db.find(x->routine);
            relevant_extern = relevant_extern || (entry && entry->performance_relevant());
          }
        });

    ParamSet own, own_loops;
    bool executed = false, extern_dep = false;
    for (const auto& r : deps.records) {
      if (r.function != fn.name) continue;
      executed = true;
      own.insert(r.own_params.begin(), r.own_params.end());
      own_loops.insert(r.own_loop_params.begin(), r.own_loop_params.end());
      extern_dep = extern_dep || r.own_extern_dependency;
    }
    out.params[fn.name] = own;

    FunctionClass c;
    if (!dynamic && !relevant_extern) {
      c = FunctionClass::StaticallyPruned;
    } else if (!executed) {
      // Never reached by the analysed run: keep it instrumented rather than guess.
      c = dynamic ? FunctionClass::Kernel : FunctionClass::CommRoutine;
    } else if (own.empty()) {
      c = FunctionClass::DynamicallyPruned;
    } else if (!own_loops.empty() || !extern_dep) {
      c = FunctionClass::Kernel;
    } else {
      c = FunctionClass::CommRoutine;
    }
    out.classes[fn.name] = c;
  }
  for (const auto& x : externs)
    if (!out.classes.count(x)) out.classes[x] = FunctionClass::Extern;
  return out;
}

std::string to_json(const Classification& c) {
  json j{{"schema_version", 1}, {"kind", "classification"}};
  j["functions"] = json::array();
  for (const auto& [f, cls] : c.classes) {
    json r{{"function", f}, {"class", class_name(cls)}};
    if (auto it = c.params.find(f); it != c.params.end()) r["params"] = it->second;
    j["functions"].push_back(std::move(r));
  }
  json counts = json::object();
  for (auto cls : {FunctionClass::StaticallyPruned, FunctionClass::DynamicallyPruned, FunctionClass::Kernel,
                   FunctionClass::CommRoutine, FunctionClass::Extern})
    counts[class_name(cls)] = c.count(cls);
  j["counts"] = counts;
  j["filter"] = c.filter();
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Validity

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::vector<pmnf::Point> slice_at_base(const std::vector<pmnf::Point>& pts, const std::string& param,
                                       const std::vector<std::string>& all) {
  Config base;
  for (const auto& q : all) {
    double lo = INFINITY;
    for (const auto& p : pts) lo = std::min(lo, p.config.at(q));
    base[q] = lo;
  }
  std::vector<pmnf::Point> out;
  for (const auto& p : pts)
    if (std::all_of(all.begin(), all.end(), [&](const std::string& q) { return q == param || p.config.at(q) == base[q]; }))
      out.push_back(p);
  std::sort(out.begin(), out.end(),
            [&](const pmnf::Point& a, const pmnf::Point& b) { return a.config.at(param) < b.config.at(param); });
  return out;
}

std::optional<pmnf::PerfModel> sub_fit(const pmnf::MeasurementSet& part, const std::optional<pmnf::ModelDeps>& deps) {
  pmnf::SelectOptions opts;
  opts.space.n = 1;
  try {
    return pmnf::select_model(part, deps, opts);
  } catch (const pmnf::UnderdeterminedError&) {
    return std::nullopt;
  }
}

std::optional<BehaviorFlag> find_split(const pmnf::MeasurementSet& ms, const std::vector<std::string>& params,
                                       const std::optional<pmnf::ModelDeps>& deps, double smape) {
  std::optional<BehaviorFlag> best;
  for (const auto& q : params) {
    std::set<double> vals;
    for (const auto& m : ms.points) vals.insert(m.config.at(q));
    std::vector<double> sorted(vals.begin(), vals.end());
    for (std::size_t s = 0; s + 1 < sorted.size(); ++s) {
      pmnf::MeasurementSet lo = ms, hi = ms;
      lo.points.clear();
      hi.points.clear();
      for (const auto& m : ms.points) (m.config.at(q) <= sorted[s] ? lo : hi).points.push_back(m);
      auto a = sub_fit(lo, deps);
      auto b = sub_fit(hi, deps);
      if (!a || !b) continue;
      double limit = 0.5 * smape;
      if (a->stats.smape >= limit || b->stats.smape >= limit) continue;
      double worst = std::max(a->stats.smape, b->stats.smape);
      // Exact ties (noise-free data with a continuous knee fit both neighbours of the knee) go
      // to the later split, so the lower regime extends as far as the data allows.
      if (!best || worst <= std::max(best->lower_smape, best->upper_smape) + 1e-9)
        best = BehaviorFlag{q, sorted[s], smape, a->stats.smape, b->stats.smape};
    }
  }
  return best;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return 0;
  auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

ValidityReport validate_experiment(const ModelMap& blackbox, const ModelMap& guided, const volume::DependencyReport* deps,
                                   const Measurements& ms, const ValidityOptions& opts) {
  std::set<FnKey> measured, bb, gd;
  for (const auto& s : ms.sets) measured.insert({s.function, s.path});
  for (const auto& [k, m] : blackbox) bb.insert(k);
  for (const auto& [k, m] : guided) gd.insert(k);
  if (measured != bb || measured != gd)
    throw std::invalid_argument("model sets and measurements cover different functions");

  ValidityReport rep;
  for (const auto& s : ms.sets) {
    FunctionValidity fv;
    fv.key = {s.function, s.path};
    for (const auto& pt : s.points) {
      double cov = coefficient_of_variation(pt.samples);
      if (cov > opts.cov_threshold) fv.cov_violations.push_back({pt.config, cov});
    }

    const volume::DependencyRecord* rec = deps ? deps->find(s.function, s.path) : nullptr;
    auto pts = s.aggregate();
    if (rec) {
      for (const auto& q : ms.params) {
        if (rec->dep_params.count(q)) continue;
        auto slice = slice_at_base(pts, q, ms.params);
        if (slice.size() < opts.contention_min_points) continue;
        std::vector<double> x, y;
        ContentionFlag flag{q, 0, {}};
        for (const auto& p : slice) {
          x.push_back(p.config.at(q));
          y.push_back(p.value);
          flag.evidence.emplace_back(p.config.at(q), p.value);
        }
        flag.rho = spearman(x, y);
        if (std::fabs(flag.rho) >= opts.contention_rho) fv.contention.push_back(std::move(flag));
      }
      fv.unvisited_branches = rec->unvisited_branches;
    }

    const auto& model = guided.at(fv.key);
    if (model.stats.smape > opts.behavior_smape) {
      std::optional<pmnf::ModelDeps> md;
      if (rec) md = pmnf::ModelDeps{rec->dep_params, rec->structure};
      std::vector<std::string> split_params = model.params.empty() ? ms.params : model.params;
      fv.behavior_change = find_split(s, split_params, md, model.stats.smape);
    }
    rep.functions.push_back(std::move(fv));
  }
  return rep;
}

std::string to_json(const ValidityReport& r) {
  json j{{"schema_version", 1}, {"kind", "validity"}};
  j["functions"] = json::array();
  for (const auto& f : r.functions) {
    json cov = json::array();
    for (const auto& v : f.cov_violations) cov.push_back(cov_json(v));
    json cont = json::array();
    for (const auto& c : f.contention) cont.push_back({{"param", c.param}, {"rho", c.rho}, {"evidence", c.evidence}});
    json beh = nullptr;
    if (f.behavior_change) {
      const auto& b = *f.behavior_change;
      beh = {{"param", b.param}, {"split", b.split}, {"smape", b.smape}, {"lower_smape", b.lower_smape},
             {"upper_smape", b.upper_smape}};
    }
    json unv = json::array();
    for (const auto& u : f.unvisited_branches)
      unv.push_back({{"id", u.site.node}, {"call_path", u.site.path}, {"arm", u.arm}, {"labels", u.labels}});
    j["functions"].push_back({{"function", f.key.function},
                              {"call_path", f.key.path},
                              {"flagged", f.flagged()},
                              {"cov_violations", cov},
                              {"contention", cont},
                              {"behavior_change", beh},
                              {"unvisited_branches", unv}});
  }
  return j.dump(2) + "\n";
}

}  // namespace taintperf::experiment
