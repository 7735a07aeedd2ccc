#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "taintperf/ast.hpp"
#include "taintperf/experiment.hpp"
#include "taintperf/pmnf.hpp"

namespace taintperf::harness {

/// Seeded generator with portable uniform and normal draws (the standard distributions are
/// implementation-defined, which would break cross-platform reproducibility).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);  // [0, n)
  double normal();

private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct CorpusSpec {
  int functions = 20;
  int params = 3;  // taken in order from size, p, n, m, k, t (p is the implicit rank count)
  int depth = 2;   // maximum loop-nest depth of multiplicative kernels
  double constant_share = 0.3;
};

struct FunctionTruth {
  std::string name;
  std::string kind;
  experiment::FunctionClass cls = experiment::FunctionClass::StaticallyPruned;
  ParamSet deps;
  std::vector<ParamSet> additive;
  std::vector<ParamSet> multiplicative;
  pmnf::PerfModel formula;
  taint::CallPath path;

  [[nodiscard]] bool constant() const {
    return cls == experiment::FunctionClass::StaticallyPruned || cls == experiment::FunctionClass::DynamicallyPruned;
  }
};

struct GroundTruth {
  std::uint64_t seed = 0;
  CorpusSpec spec;
  std::vector<std::string> params;
  pmnf::Config base;
  std::vector<FunctionTruth> functions;

  [[nodiscard]] std::size_t constant_count() const;
  [[nodiscard]] const FunctionTruth* find(const std::string& name) const;
};

struct Corpus {
  std::string source;
  dsl::Program program;
  GroundTruth truth;
};

/// Throws std::invalid_argument for infeasible specs.
Corpus gen_corpus(std::uint64_t seed, const CorpusSpec& spec);

struct Contamination {
  std::string param = "p";
  double amplitude = 0.2;  // fraction of the truth added at the largest value of `param`
};

struct NoiseSpec {
  double sigma = 0.05;
  std::optional<Contamination> contamination;
};

/// truth * (1 + eps), eps ~ N(0, sigma^2) truncated at 3 sigma, plus the optional
/// amplitude * truth * log2(x)^2 / log2(x_max)^2 contamination.
experiment::Measurements gen_measurements(const std::vector<FunctionTruth>& functions,
                                          const experiment::Design& design, const NoiseSpec& noise,
                                          std::uint64_t seed);

std::string to_json(const GroundTruth& gt);
GroundTruth truth_from_json(const std::string& text);

}  // namespace taintperf::harness
