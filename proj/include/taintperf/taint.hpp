#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taintperf/ast.hpp"
#include "taintperf/labels.hpp"
#include "taintperf/libdb.hpp"

namespace taintperf::taint {

using dsl::NodeId;
using CallPath = std::vector<NodeId>;
using ParamValues = std::map<std::string, double>;

/// Renders a call path as dot-joined call-site ids ("" for the entry function body).
std::string path_string(const CallPath& path);
CallPath parse_path(const std::string& text);

/// A syntactic location reached through a particular call path.
struct SiteKey {
  NodeId node = 0;
  CallPath path;
  friend auto operator<=>(const SiteKey&, const SiteKey&) = default;
};

class RunError : public std::runtime_error {
public:
  RunError(const std::string& msg, CallPath path)
      : std::runtime_error(msg + " (call path [" + path_string(path) + "])"), path_(std::move(path)) {}
  [[nodiscard]] const CallPath& path() const { return path_; }

private:
  CallPath path_;
};

struct RunOptions {
  bool implicit_flows = true;
  std::uint64_t max_trip_count = 100'000'000;
};

// ---------------------------------------------------------------------------
// Runtime values and taint state

struct ArrayData {
  std::vector<double> elems;
  LabelSet labels;  // one label set for the whole array
};

struct Value {
  enum class Kind { Int, Real, Array };
  Kind kind = Kind::Int;
  std::int64_t i = 0;
  double r = 0;
  std::shared_ptr<ArrayData> arr;

  static Value integer(std::int64_t v) { return {Kind::Int, v, 0, nullptr}; }
  static Value real(double v) { return {Kind::Real, 0, v, nullptr}; }
  /// Integral doubles become Int values.
  static Value number(double v);

  [[nodiscard]] double as_real() const;
  [[nodiscard]] bool truthy() const { return as_real() != 0; }
};

struct Slot {
  Value value;
  LabelSet labels;
};

/// Variable labels per activation frame plus the stack of control-flow labels.
///
/// The control stack holds one entry per entered tainted branch/loop body; assignments made
/// while entries are present union the whole stack into their targets.
class TaintState {
public:
  explicit TaintState(ParamTable params) : params_(std::move(params)) {}

  [[nodiscard]] const ParamTable& params() const { return params_; }

  void push_frame();
  void pop_frame();
  [[nodiscard]] std::size_t frame_depth() const { return frames_.size(); }

  Slot& bind_global(const std::string& name, Value v, LabelSet labels);
  /// Declares or overwrites a local in the current frame (labels get the control union added).
  Slot& assign(const std::string& name, Value v, LabelSet labels);
  [[nodiscard]] Slot* lookup(const std::string& name);
  [[nodiscard]] const Slot* lookup(const std::string& name) const;
  [[nodiscard]] bool is_global(const std::string& name) const;

  /// Unions `label` into the labels of `var`. Throws on unknown variable or undeclared label.
  void mark_source(const std::string& var, const std::string& label);

  void enter_control(LabelSet condition_labels);
  /// Pops one control entry. With implicit flows on, every bound variable named in
  /// `untaken_writes` also receives the popped labels.
  void exit_control(const std::vector<std::string>& untaken_writes = {}, bool implicit = false);
  /// Adds labels to the named variables (implicit flows of code that did not run).
  void taint_writes(const std::vector<std::string>& names, LabelSet labels);

  [[nodiscard]] LabelSet control() const { return cumulative_.empty() ? LabelSet{} : cumulative_.back(); }
  [[nodiscard]] std::size_t control_depth() const { return control_.size(); }
  void truncate_control(std::size_t depth);

private:
  ParamTable params_;
  std::map<std::string, Slot> globals_;
  std::vector<std::map<std::string, Slot>> frames_;
  std::vector<LabelSet> control_;
  std::vector<LabelSet> cumulative_;
};

/// Data-flow labels of a call-free expression plus the current control union.
/// Calls contribute the union of their argument labels.
LabelSet propagate_expr(const TaintState& state, const dsl::Expr& expr);

// ---------------------------------------------------------------------------
// Trace

/// Per-entry trip counts of one loop at one call path.
struct TripStats {
  std::uint64_t entries = 0;
  std::uint64_t total = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  std::uint64_t hash = 14695981039346656037ULL;  // FNV-1a over the per-entry sequence

  void add(std::uint64_t trips);
  void merge(const TripStats& other);
  friend bool operator==(const TripStats&, const TripStats&) = default;
};

struct LoopRecord {
  ParamSet labels;
  TripStats trips;
  std::uint64_t evaluations = 0;
  std::size_t max_condition_labels = 0;
};

struct BranchRecord {
  ParamSet labels;
  std::uint64_t taken_then = 0;
  std::uint64_t taken_else = 0;
  bool then_nonempty = false;
  bool else_nonempty = false;
};

struct ExternRecord {
  std::string routine;
  ParamSet dependency;
  bool has_dependency = false;
  std::optional<std::string> hint;
  std::uint64_t calls = 0;
};

struct UnvisitedBranch {
  SiteKey site;
  std::string arm;  // "then" or "else"
  ParamSet labels;
};

struct TraceReport {
  ParamValues config;
  bool implicit_flows = true;
  std::vector<std::string> params;
  std::map<SiteKey, LoopRecord> loops;
  std::map<SiteKey, BranchRecord> branches;  // only branches whose condition was tainted
  std::map<SiteKey, ExternRecord> externs;
  std::map<SiteKey, std::uint64_t> statements;
  std::map<CallPath, std::pair<std::string, std::uint64_t>> invocations;  // path -> (function, count)
  std::vector<std::string> warnings;

  [[nodiscard]] std::vector<UnvisitedBranch> unvisited_tainted_branches() const;
  [[nodiscard]] std::uint64_t statement_count(const SiteKey& key) const;
};

/// Executes `program` from its entry function while propagating labels.
///
/// Throws RunError on evaluation errors (division by zero, loop guard, missing parameter values)
/// and std::invalid_argument when the program fails validation.
TraceReport run(const dsl::Program& program, const ParamValues& param_values, const libdb::LibraryDB& db,
                const RunOptions& opts = {});

/// Merges traces of the same program: label sets and counts accumulate.
TraceReport merge(const std::vector<TraceReport>& traces);

/// Ground truth for loop dependencies: reruns with each parameter scaled by each delta and
/// reports which parameters changed any trip statistic of a loop.
std::map<SiteKey, ParamSet> perturbation_oracle(const dsl::Program& program, const ParamValues& base,
                                                const libdb::LibraryDB& db, const std::vector<double>& deltas,
                                                const RunOptions& opts = {});

std::string to_json(const TraceReport& trace);
TraceReport trace_from_json(const std::string& text);

}  // namespace taintperf::taint
