#pragma once

#include <compare>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "taintperf/labels.hpp"
#include "taintperf/taint.hpp"
#include "taintperf/volume.hpp"

namespace taintperf::pmnf {

using Config = std::map<std::string, double>;

struct Rational {
  int num = 0;
  int den = 1;

  Rational() = default;
  Rational(int n, int d = 1);
  [[nodiscard]] double value() const { return static_cast<double>(num) / den; }
  [[nodiscard]] std::string str() const;
  friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    return static_cast<long long>(a.num) * b.den <=> static_cast<long long>(b.num) * a.den;
  }
};

struct SearchSpace {
  int n = 2;  // maximum number of non-constant terms per parameter
  std::vector<Rational> I;
  std::vector<int> J;

  static SearchSpace defaults();
};

/// x^i * log2(x)^j for one parameter.
struct Factor {
  std::string param;
  Rational i;
  int j = 0;
  friend auto operator<=>(const Factor&, const Factor&) = default;
};

/// Product of factors over distinct parameters, sorted by parameter name.
struct Term {
  std::vector<Factor> factors;

  [[nodiscard]] double eval(const Config& cfg) const;
  [[nodiscard]] std::string str() const;
  [[nodiscard]] Term times(const Term& other) const;
  friend auto operator<=>(const Term&, const Term&) = default;
};

/// Non-constant terms in canonical (sorted) order; the constant c0 is always present.
struct Hypothesis {
  std::vector<Term> terms;

  void canonicalize();
  [[nodiscard]] std::string str() const;
  friend auto operator<=>(const Hypothesis&, const Hypothesis&) = default;
};

struct FitStats {
  double smape = 0;   // leave-one-config-out
  double rss = 0;
  double adj_r2 = 0;
};

struct PerfModel {
  Hypothesis hypothesis;
  std::vector<double> coefficients;  // c0, c1..cn aligned with hypothesis.terms
  FitStats stats;
  std::vector<std::string> params;   // parameters the model may depend on
  double y_scale = 1;                // max |aggregate| of the training data, for display only

  [[nodiscard]] bool is_constant() const { return hypothesis.terms.empty(); }
  [[nodiscard]] std::string formula() const;
};

struct Point {
  Config config;
  double value = 0;
};

struct Measurement {
  Config config;
  std::vector<double> samples;
};

struct MeasurementSet {
  std::string function;
  taint::CallPath path;
  std::string metric = "time";
  std::vector<Measurement> points;

  /// One point per configuration holding the median of its samples.
  [[nodiscard]] std::vector<Point> aggregate() const;
};

double median(std::vector<double> v);
double smape(const std::vector<double>& actual, const std::vector<double>& predicted);

class UnderdeterminedError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Single-parameter hypotheses: the constant model, then every combination of up to n distinct
/// terms in canonical order.
std::vector<Hypothesis> enumerate_hypotheses(const SearchSpace& space, const std::string& param);

struct FitResult {
  std::optional<PerfModel> model;
  std::string rejected;  // reason when model is empty
};

/// OLS on the given points. Rejects ill-conditioned designs, too few points, non-finite term
/// values and models predicting negative values on the training points or hull corners.
FitResult fit(const Hypothesis& h, const std::vector<Point>& data);

/// Ordering used during selection: lower cross-validated SMAPE (within a tolerance), then fewer
/// terms, then the lexicographically smaller hypothesis.
bool better(const PerfModel& a, const PerfModel& b);

/// Dependency information that guides selection.
struct ModelDeps {
  ParamSet dep_params;
  volume::Structure structure;
};

struct SelectOptions {
  SearchSpace space = SearchSpace::defaults();
  int top_k = 3;
};

/// Guided mode when `deps` is present, black-box mode over every varying parameter otherwise.
/// Throws UnderdeterminedError when the data cannot support the required coefficients.
PerfModel select_model(const MeasurementSet& data, const std::optional<ModelDeps>& deps,
                       const SelectOptions& opts = {});

/// Throws std::invalid_argument if a model parameter is missing from `config` or below 1.
double evaluate(const PerfModel& model, const Config& config);

std::string to_json(const PerfModel& model);
PerfModel model_from_json(const std::string& text);

}  // namespace taintperf::pmnf
