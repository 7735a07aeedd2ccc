#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taintperf/labels.hpp"

namespace taintperf::libdb {

class LibDbError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument positions are 1-based over the value arguments of `extern("Name", a1, a2, ...)`.
struct SourceWrite {
  int arg = 1;
  std::string label;
};

struct ValueWrite {
  int arg = 1;
  double value = 0;
};

/// One dependency atom: either a fixed parameter or the labels carried by an argument.
struct DepAtom {
  std::optional<std::string> param;
  std::optional<int> arg;
};

struct LibEntry {
  std::string name;
  int arity = 0;
  std::vector<SourceWrite> source_writes;
  std::vector<ValueWrite> value_writes;
  std::vector<DepAtom> dep_template;
  std::optional<std::string> loop_semantics;
  double returns = 0;

  [[nodiscard]] bool performance_relevant() const { return !dep_template.empty(); }
};

class LibraryDB {
public:
  LibraryDB() = default;

  void add(LibEntry entry);
  void declare_implicit(const std::string& param);

  [[nodiscard]] const LibEntry* find(const std::string& name) const;
  [[nodiscard]] bool declares_implicit(const std::string& param) const;
  [[nodiscard]] const std::vector<std::string>& implicit_params() const { return implicit_; }
  [[nodiscard]] const std::map<std::string, LibEntry>& entries() const { return entries_; }
  [[nodiscard]] bool empty() const { return entries_.empty() && implicit_.empty(); }

private:
  std::map<std::string, LibEntry> entries_;
  std::vector<std::string> implicit_;
};

/// Parses the JSON database format; an empty or whitespace-only text yields an empty database.
LibraryDB parse_db(const std::string& text);
LibraryDB load_db(const std::string& path);
std::string dump_db(const LibraryDB& db);

/// MPI-like database shipped with the toolkit (also in data/libdb.json).
LibraryDB default_db();

struct ArgWrite {
  int arg = 1;
  double value = 0;
  LabelSet labels;
};

struct ExternEffect {
  double return_value = 0;
  LabelSet return_labels;
  std::vector<ArgWrite> writes;
  /// Parameters this call site depends on (fixed params plus argument labels).
  LabelSet dependency;
  bool has_dependency = false;
  std::optional<std::string> hint;
};

/// Computes the effect of one extern call. Never removes labels: the return value carries the
/// union of argument labels and control labels, and writes add labels on top of control labels.
ExternEffect apply_extern(const LibEntry& entry, std::span<const double> arg_values,
                          std::span<const LabelSet> arg_labels, LabelSet control, const ParamTable& params,
                          const std::map<std::string, double>& param_values);

}  // namespace taintperf::libdb
