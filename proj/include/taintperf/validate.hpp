#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "taintperf/ast.hpp"
#include "taintperf/libdb.hpp"

namespace taintperf::dsl {

struct Diagnostic {
  std::string message;
  std::string function;
  SourcePos pos;
};

struct LoopInfo {
  NodeId id = 0;
  std::string function;
  SourcePos pos;
  std::optional<std::int64_t> trip_count;  // set only for constant-trip loops
};

/// Result of static checks. Every loop lands in exactly one of `constant_loops` / `dynamic_loops`.
struct ValidationReport {
  std::vector<Diagnostic> errors;
  std::vector<Diagnostic> warnings;
  std::vector<std::vector<std::string>> recursion_cycles;
  std::vector<LoopInfo> constant_loops;
  std::vector<LoopInfo> dynamic_loops;

  [[nodiscard]] bool ok() const { return errors.empty(); }
  [[nodiscard]] const LoopInfo* constant_loop(NodeId id) const;
  [[nodiscard]] bool is_constant(NodeId id) const { return constant_loop(id) != nullptr; }
  /// Loops (constant and dynamic) lexically inside `function`.
  [[nodiscard]] std::vector<LoopInfo> loops_of(const std::string& function) const;
};

/// Static checks: name resolution, write targets, recursion cycles reachable from the entry
/// function, and constant trip-count detection (literal bounds and step, induction variable
/// never written in the body). `db` may be null, in which case every extern call is unresolved.
ValidationReport validate(const Program& program, const libdb::LibraryDB* db);

std::string to_json(const ValidationReport& report);

}  // namespace taintperf::dsl
