#include "taintperf/libdb.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace taintperf::libdb {

using nlohmann::json;

void LibraryDB::add(LibEntry entry) {
  if (entries_.count(entry.name)) throw LibDbError("duplicate library routine '" + entry.name + "'");
  auto check_arg = [&](int arg, const char* what) {
    if (arg < 1 || arg > entry.arity)
      throw LibDbError(entry.name + ": " + what + " argument index " + std::to_string(arg) + " out of range 1.." +
                       std::to_string(entry.arity));
  };
  for (const auto& w : entry.source_writes) {
    check_arg(w.arg, "source");
    if (!declares_implicit(w.label))
      throw LibDbError(entry.name + ": source label '" + w.label + "' is not a declared implicit parameter");
  }
  for (const auto& w : entry.value_writes) check_arg(w.arg, "value");
  for (const auto& a : entry.dep_template) {
    if (a.param.has_value() == a.arg.has_value())
      throw LibDbError(entry.name + ": dependency atom must name exactly one of 'param' or 'arg'");
    if (a.arg) check_arg(*a.arg, "dependency");
    if (a.param && !declares_implicit(*a.param))
      throw LibDbError(entry.name + ": dependency parameter '" + *a.param + "' is not a declared implicit parameter");
  }
  std::string name = entry.name;
  entries_.emplace(std::move(name), std::move(entry));
}

void LibraryDB::declare_implicit(const std::string& param) {
  if (declares_implicit(param)) throw LibDbError("implicit parameter '" + param + "' declared twice");
  implicit_.push_back(param);
}

const LibEntry* LibraryDB::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

bool LibraryDB::declares_implicit(const std::string& param) const {
  return std::find(implicit_.begin(), implicit_.end(), param) != implicit_.end();
}

namespace {

int get_int(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) throw LibDbError(ctx + ": missing integer field '" + key + "'");
  return j.at(key).get<int>();
}

LibEntry parse_entry(const json& j) {
  if (!j.is_object() || !j.contains("name") || !j.at("name").is_string())
    throw LibDbError("malformed routine entry: " + j.dump());
  LibEntry e;
  e.name = j.at("name").get<std::string>();
  e.arity = get_int(j, "arity", e.name);
  if (e.arity < 0) throw LibDbError(e.name + ": negative arity");
  try {
    for (const auto& w : j.value("source_writes", json::array()))
      e.source_writes.push_back({get_int(w, "arg", e.name), w.at("label").get<std::string>()});
    for (const auto& w : j.value("value_writes", json::array()))
      e.value_writes.push_back({get_int(w, "arg", e.name), w.at("value").get<double>()});
    for (const auto& a : j.value("dep_template", json::array())) {
      DepAtom atom;
      if (a.contains("param")) atom.param = a.at("param").get<std::string>();
      if (a.contains("arg")) atom.arg = get_int(a, "arg", e.name);
      e.dep_template.push_back(atom);
    }
    if (j.contains("loop_semantics") && !j.at("loop_semantics").is_null())
      e.loop_semantics = j.at("loop_semantics").get<std::string>();
    e.returns = j.value("returns", 0.0);
  } catch (const json::exception& ex) {
    throw LibDbError(e.name + ": malformed entry (" + ex.what() + ")");
  }
  return e;
}

}  // namespace

LibraryDB parse_db(const std::string& text) {
  LibraryDB db;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) return db;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw LibDbError(std::string("library database is not valid JSON: ") + ex.what());
  }
  if (!j.is_object()) throw LibDbError("library database must be a JSON object");
  for (const auto& p : j.value("implicit_params", json::array())) {
    if (!p.is_string()) throw LibDbError("implicit_params must be strings");
    db.declare_implicit(p.get<std::string>());
  }
  for (const auto& r : j.value("routines", json::array())) db.add(parse_entry(r));
  return db;
}

LibraryDB load_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LibDbError("cannot open library database '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_db(ss.str());
}

std::string dump_db(const LibraryDB& db) {
  json routines = json::array();
  for (const auto& [name, e] : db.entries()) {
    json r{{"name", name}, {"arity", e.arity}};
    if (!e.source_writes.empty()) {
      r["source_writes"] = json::array();
      for (const auto& w : e.source_writes) r["source_writes"].push_back({{"arg", w.arg}, {"label", w.label}});
    }
    if (!e.value_writes.empty()) {
      r["value_writes"] = json::array();
      for (const auto& w : e.value_writes) r["value_writes"].push_back({{"arg", w.arg}, {"value", w.value}});
    }
    if (!e.dep_template.empty()) {
      r["dep_template"] = json::array();
      for (const auto& a : e.dep_template)
        r["dep_template"].push_back(a.param ? json{{"param", *a.param}} : json{{"arg", *a.arg}});
    }
    if (e.loop_semantics) r["loop_semantics"] = *e.loop_semantics;
    if (e.returns != 0) r["returns"] = e.returns;
    routines.push_back(std::move(r));
  }
  json j{{"schema_version", 1}, {"implicit_params", db.implicit_params()}, {"routines", routines}};
  return j.dump(2) + "\n";
}

LibraryDB default_db() {
  static const char* kDefault = R"db({
  "schema_version": 1,
  "implicit_params": ["p"],
  "routines": [
    {"name": "MPI_Comm_size", "arity": 1, "source_writes": [{"arg": 1, "label": "p"}]},
    {"name": "MPI_Comm_rank", "arity": 1, "value_writes": [{"arg": 1, "value": 0}]},
    {"name": "MPI_Send", "arity": 2, "dep_template": [{"param": "p"}, {"arg": 2}]},
    {"name": "MPI_Recv", "arity": 2, "dep_template": [{"param": "p"}, {"arg": 2}]},
    {"name": "MPI_Allreduce", "arity": 2, "dep_template": [{"param": "p"}, {"arg": 2}], "loop_semantics": "log(p)"},
    {"name": "MPI_Bcast", "arity": 2, "dep_template": [{"param": "p"}, {"arg": 2}], "loop_semantics": "log(p)"},
    {"name": "MPI_Barrier", "arity": 0, "dep_template": [{"param": "p"}], "loop_semantics": "log(p)"},
    {"name": "MPI_Wtime", "arity": 0}
  ]
})db";
  return parse_db(kDefault);
}

ExternEffect apply_extern(const LibEntry& entry, std::span<const double> arg_values,
                          std::span<const LabelSet> arg_labels, LabelSet control, const ParamTable& params,
                          const std::map<std::string, double>& param_values) {
  if (static_cast<int>(arg_values.size()) != entry.arity || arg_labels.size() != arg_values.size())
    throw LibDbError(entry.name + ": expected " + std::to_string(entry.arity) + " argument(s), got " +
                     std::to_string(arg_values.size()));
  ExternEffect fx;
  fx.return_value = entry.returns;
  fx.return_labels = control;
  for (auto l : arg_labels) fx.return_labels |= l;

  for (const auto& w : entry.source_writes) {
    auto it = param_values.find(w.label);
    if (it == param_values.end())
      throw LibDbError(entry.name + ": no value configured for implicit parameter '" + w.label + "'");
    fx.writes.push_back({w.arg, it->second, params.label(w.label) | control});
  }
  for (const auto& w : entry.value_writes) fx.writes.push_back({w.arg, w.value, control});

  for (const auto& atom : entry.dep_template) {
    fx.has_dependency = true;
    if (atom.param) {
      fx.dependency |= params.label(*atom.param);
    } else {
      fx.dependency |= arg_labels[static_cast<std::size_t>(*atom.arg - 1)];
    }
  }
  fx.hint = entry.loop_semantics;
  return fx;
}

}  // namespace taintperf::libdb
