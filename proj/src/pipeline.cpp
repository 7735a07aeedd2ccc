#include "taintperf/pipeline.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <set>

#include "taintperf/util.hpp"

namespace taintperf::pipeline {

using experiment::FnKey;
using nlohmann::json;

Mode parse_mode(const std::string& s) {
  if (s == "guided") return Mode::Guided;
  if (s == "blackbox") return Mode::BlackBox;
  if (s == "both") return Mode::Both;
  throw std::invalid_argument("unknown mode '" + s + "' (expected guided, blackbox or both)");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Guided: return "guided";
    case Mode::BlackBox: return "blackbox";
    case Mode::Both: return "both";
  }
  return "?";
}

namespace {
double to_number(const std::string& s, const std::string& ctx) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw std::invalid_argument("invalid number '" + s + "' in '" + ctx + "'");
  return v;
}
}  // namespace

std::pair<std::string, double> parse_assignment(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected name=value, got '" + text + "'");
  return {trim(text.substr(0, eq)), to_number(trim(text.substr(eq + 1)), text)};
}

std::pair<std::string, std::vector<double>> parse_value_list(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("expected name=v1,v2,..., got '" + text + "'");
  std::vector<double> vals;
  for (const auto& part : split(text.substr(eq + 1), ',')) vals.push_back(to_number(trim(part), text));
  return {trim(text.substr(0, eq)), vals};
}

std::optional<pmnf::ModelDeps> deps_for(const volume::DependencyReport& deps, const FnKey& key) {
  const auto* rec = deps.find(key.function, key.path);
  if (!rec) return std::nullopt;
  return pmnf::ModelDeps{rec->dep_params, rec->structure};
}

ModelRun model_all(const experiment::Measurements& ms, const volume::DependencyReport* deps, const ModelOptions& opts) {
  ModelRun run;
  run.mode = opts.mode;
  auto filtered = experiment::cov_filter(ms, opts.cov_threshold);
  run.excluded = filtered.excluded;
  const bool want_guided = opts.mode != Mode::BlackBox;
  const bool want_bb = opts.mode != Mode::Guided;
  for (const auto& set : filtered.kept.sets) {
    FnKey key{set.function, set.path};
    try {
      if (want_guided) {
        std::optional<pmnf::ModelDeps> d;
        if (deps) d = deps_for(*deps, key);
        if (!d) run.unguided.push_back(key);
        run.guided[key] = pmnf::select_model(set, d, opts.select);
      }
      if (want_bb) run.blackbox[key] = pmnf::select_model(set, std::nullopt, opts.select);
    } catch (const std::exception& e) {
      run.errors[key] = e.what();
      run.guided.erase(key);
      run.blackbox.erase(key);
    }
  }
  return run;
}

std::string to_json(const ModelRun& run) {
  std::set<FnKey> keys;
  for (const auto& [k, m] : run.guided) keys.insert(k);
  for (const auto& [k, m] : run.blackbox) keys.insert(k);
  for (const auto& [k, m] : run.errors) keys.insert(k);
  json fns = json::array();
  for (const auto& k : keys) {
    json r{{"function", k.function}, {"call_path", k.path}};
    if (auto it = run.guided.find(k); it != run.guided.end()) r["guided"] = json::parse(pmnf::to_json(it->second));
    if (auto it = run.blackbox.find(k); it != run.blackbox.end())
      r["blackbox"] = json::parse(pmnf::to_json(it->second));
    if (auto it = run.errors.find(k); it != run.errors.end()) r["error"] = it->second;
    if (std::find(run.unguided.begin(), run.unguided.end(), k) != run.unguided.end()) r["unguided"] = true;
    fns.push_back(std::move(r));
  }
  json excl = json::array();
  for (const auto& e : run.excluded)
    excl.push_back({{"function", e.key.function}, {"call_path", e.key.path}, {"reason", e.reason}});
  json j{{"schema_version", 1}, {"kind", "models"}, {"mode", mode_name(run.mode)}, {"functions", fns},
         {"excluded", excl}};
  return j.dump(2) + "\n";
}

ModelRun models_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("kind", "") != "models") throw std::invalid_argument("not a models file (missing kind=models)");
  ModelRun run;
  run.mode = parse_mode(j.at("mode").get<std::string>());
  for (const auto& f : j.at("functions")) {
    FnKey key{f.at("function").get<std::string>(), f.at("call_path").get<taint::CallPath>()};
    if (f.contains("guided")) run.guided[key] = pmnf::model_from_json(f.at("guided").dump());
    if (f.contains("blackbox")) run.blackbox[key] = pmnf::model_from_json(f.at("blackbox").dump());
    if (f.contains("error")) run.errors[key] = f.at("error").get<std::string>();
    if (f.value("unguided", false)) run.unguided.push_back(key);
  }
  for (const auto& e : j.value("excluded", json::array()))
    run.excluded.push_back({{e.at("function").get<std::string>(), e.at("call_path").get<taint::CallPath>()},
                            e.at("reason").get<std::string>(),
                            {}});
  return run;
}

}  // namespace taintperf::pipeline
