#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "taintperf/ast.hpp"

namespace taintperf::dsl {

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& msg, SourcePos pos)
      : std::runtime_error(std::to_string(pos.line) + ":" + std::to_string(pos.column) + ": " + msg), pos_(pos) {}
  [[nodiscard]] SourcePos pos() const { return pos_; }

private:
  SourcePos pos_;
};

/// Parses PTL source. Node ids are assigned in preorder source order, starting at 1.
Program parse(std::string_view source);

Program parse_file(const std::string& path);

}  // namespace taintperf::dsl
