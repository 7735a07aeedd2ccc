#pragma once

#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taintperf/ast.hpp"
#include "taintperf/libdb.hpp"
#include "taintperf/pmnf.hpp"
#include "taintperf/validate.hpp"
#include "taintperf/volume.hpp"

namespace taintperf::experiment {

using pmnf::Config;
using taint::CallPath;

struct FnKey {
  std::string function;
  CallPath path;
  friend auto operator<=>(const FnKey&, const FnKey&) = default;
};

std::string key_string(const FnKey& key);

// ---------------------------------------------------------------------------
// Design

struct Design {
  std::vector<std::string> params;
  std::vector<Config> configs;  // unique, sorted
  int repetitions = 5;
  Config base;                  // smallest value per parameter
};

/// Multiplicative groups get a full cross product (others at base); every other parameter gets a
/// one-dimensional sweep through the base configuration. Without `multiplicative_groups` the design
/// is the full cross product. Throws std::invalid_argument on an empty value list.
Design design(const std::map<std::string, std::vector<double>>& values,
              const std::vector<ParamSet>* multiplicative_groups, int repetitions = 5);
/// Groups taken from every record of a dependency report.
Design design(const std::map<std::string, std::vector<double>>& values, const volume::DependencyReport* deps,
              int repetitions = 5);

std::string to_json(const Design& d);
Design design_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Measurements

class IngestError : public std::runtime_error {
public:
  IngestError(const std::string& msg, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  [[nodiscard]] std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

struct Measurements {
  std::vector<std::string> params;
  std::vector<pmnf::MeasurementSet> sets;  // ordered by (function, call path); configs in first-seen order
  std::vector<std::string> warnings;

  [[nodiscard]] const pmnf::MeasurementSet* find(const FnKey& key) const;
};

/// Parses `function,callpath,<params...>,rep,value`.
Measurements ingest_text(const std::string& csv);
Measurements ingest(const std::string& path);
std::string to_csv(const Measurements& m);

struct CovViolation {
  Config config;
  double cov = 0;
};

struct Exclusion {
  FnKey key;
  std::string reason;
  std::vector<CovViolation> configs;
};

struct FilterResult {
  Measurements kept;
  std::vector<Exclusion> excluded;
};

/// Population standard deviation over mean.
double coefficient_of_variation(const std::vector<double>& samples);
FilterResult cov_filter(const Measurements& ms, double threshold = 0.1);
std::string to_json(const FilterResult& r);

// ---------------------------------------------------------------------------
// Classification

enum class FunctionClass { StaticallyPruned, DynamicallyPruned, Kernel, CommRoutine, Extern };
std::string class_name(FunctionClass c);

struct Classification {
  std::map<std::string, FunctionClass> classes;
  std::map<std::string, ParamSet> params;  // own dependency parameters per function

  [[nodiscard]] std::vector<std::string> filter() const;  // kernels and communication routines
  [[nodiscard]] std::size_t count(FunctionClass c) const;
};

Classification classify(const dsl::Program& program, const dsl::ValidationReport& validation,
                        const volume::DependencyReport& deps, const libdb::LibraryDB& db);
std::string to_json(const Classification& c);

// ---------------------------------------------------------------------------
// Validity checks

struct ValidityOptions {
  double cov_threshold = 0.1;
  double contention_rho = 0.8;
  std::size_t contention_min_points = 5;
  double behavior_smape = 0.15;
};

struct ContentionFlag {
  std::string param;
  double rho = 0;
  std::vector<std::pair<double, double>> evidence;  // (param value, median)
};

struct BehaviorFlag {
  std::string param;
  double split = 0;  // last value of the lower part
  double smape = 0;
  double lower_smape = 0;
  double upper_smape = 0;
};

struct FunctionValidity {
  FnKey key;
  std::vector<CovViolation> cov_violations;
  std::vector<ContentionFlag> contention;
  std::optional<BehaviorFlag> behavior_change;
  std::vector<taint::UnvisitedBranch> unvisited_branches;

  [[nodiscard]] bool flagged() const {
    return !cov_violations.empty() || !contention.empty() || behavior_change || !unvisited_branches.empty();
  }
};

struct ValidityReport {
  std::vector<FunctionValidity> functions;
};

using ModelMap = std::map<FnKey, pmnf::PerfModel>;

double spearman(const std::vector<double>& x, const std::vector<double>& y);

/// Throws std::invalid_argument when the model sets and measurement sets cover different functions.
ValidityReport validate_experiment(const ModelMap& blackbox, const ModelMap& guided,
                                   const volume::DependencyReport* deps, const Measurements& ms,
                                   const ValidityOptions& opts = {});
std::string to_json(const ValidityReport& r);

}  // namespace taintperf::experiment
