#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintperf {

/// Ordered set of parameter names. Used wherever labels leave the interpreter.
using ParamSet = std::set<std::string>;

/// Set of parameter labels attached to a runtime value.
///
/// Labels are interned into bit positions by a ParamTable, so a LabelSet is
/// only meaningful together with the table that produced it. The empty set
/// means "untainted".
class LabelSet {
public:
  static constexpr std::size_t kMaxLabels = 64;

  constexpr LabelSet() = default;

  static constexpr LabelSet single(std::size_t index) {
    LabelSet s;
    s.bits_ = std::uint64_t{1} << index;
    return s;
  }

  [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }
  [[nodiscard]] constexpr std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  [[nodiscard]] constexpr bool contains(std::size_t index) const { return (bits_ >> index) & 1U; }
  [[nodiscard]] constexpr bool contains(LabelSet other) const { return (bits_ & other.bits_) == other.bits_; }
  [[nodiscard]] constexpr std::uint64_t bits() const { return bits_; }

  constexpr LabelSet& operator|=(LabelSet other) {
    bits_ |= other.bits_;
    return *this;
  }
  friend constexpr LabelSet operator|(LabelSet a, LabelSet b) { return a |= b; }
  friend constexpr bool operator==(LabelSet a, LabelSet b) = default;

private:
  std::uint64_t bits_ = 0;
};

/// Interning table from parameter names to LabelSet bit positions.
class ParamTable {
public:
  ParamTable() = default;
  explicit ParamTable(const std::vector<std::string>& names) {
    for (const auto& n : names) intern(n);
  }

  std::size_t intern(const std::string& name) {
    if (auto idx = find(name)) return *idx;
    if (names_.size() >= LabelSet::kMaxLabels) throw std::length_error("too many parameter labels (max 64)");
    names_.push_back(name);
    return names_.size() - 1;
  }

  [[nodiscard]] std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  [[nodiscard]] LabelSet label(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw std::invalid_argument("unknown parameter label '" + name + "'");
    return LabelSet::single(*idx);
  }

  [[nodiscard]] ParamSet names(LabelSet set) const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (set.contains(i)) out.insert(names_[i]);
    return out;
  }

  [[nodiscard]] const std::vector<std::string>& all() const { return names_; }

private:
  std::vector<std::string> names_;
};

inline std::string join(const ParamSet& s, const std::string& sep = ",") {
  std::string out;
  for (const auto& p : s) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace taintperf
