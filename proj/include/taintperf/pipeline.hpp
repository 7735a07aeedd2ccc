#pragma once

#include <map>
#include <optional>
#include <string>

#include "taintperf/experiment.hpp"
#include "taintperf/pmnf.hpp"
#include "taintperf/volume.hpp"

// Glue between the stages: what the command-line tool does, minus argument parsing and file I/O.
namespace taintperf::pipeline {

enum class Mode { Guided, BlackBox, Both };
Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

/// Parses `name=value`.
std::pair<std::string, double> parse_assignment(const std::string& text);
/// Parses `name=v1,v2,...`.
std::pair<std::string, std::vector<double>> parse_value_list(const std::string& text);

/// Guidance for one measured function, or nothing when the report has no record for it.
std::optional<pmnf::ModelDeps> deps_for(const volume::DependencyReport& deps, const experiment::FnKey& key);

struct ModelRun {
  Mode mode = Mode::Guided;
  experiment::ModelMap guided;
  experiment::ModelMap blackbox;
  std::map<experiment::FnKey, std::string> errors;  // functions that could not be modeled
  std::vector<experiment::FnKey> unguided;          // guided mode fell back to black-box (no record)
  std::vector<experiment::Exclusion> excluded;      // removed by the CoV filter
};

struct ModelOptions {
  Mode mode = Mode::Guided;
  double cov_threshold = 0.1;
  pmnf::SelectOptions select;
};

/// CoV filter followed by model selection for every remaining function.
ModelRun model_all(const experiment::Measurements& ms, const volume::DependencyReport* deps, const ModelOptions& opts);

std::string to_json(const ModelRun& run);
ModelRun models_from_json(const std::string& text);

}  // namespace taintperf::pipeline
