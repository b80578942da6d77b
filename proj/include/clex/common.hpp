#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clex {

/// Thrown for bad inputs and violated preconditions (CLI exit code 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a well-formed computation cannot complete (CLI exit code 2).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label : std::uint8_t { Aggression = 0, Loss = 1, Other = 2 };

inline constexpr std::array<Label, 3> kLabels = {Label::Aggression, Label::Loss,
                                                 Label::Other};
inline constexpr std::size_t kNumLabels = 3;

inline constexpr std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::Aggression: return "aggression";
    case Label::Loss: return "loss";
    case Label::Other: return "other";
  }
  return "other";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "aggression") return Label::Aggression;
  if (s == "loss") return Label::Loss;
  if (s == "other") return Label::Other;
  return std::nullopt;
}

namespace log {

inline std::atomic<bool>& quiet_flag() {
  static std::atomic<bool> quiet{false};
  return quiet;
}

inline void set_quiet(bool q) { quiet_flag() = q; }

inline void warn(std::string_view msg) {
  if (!quiet_flag()) std::cerr << "warning: " << msg << '\n';
}

inline void info(std::string_view msg) {
  if (!quiet_flag()) std::cerr << msg << '\n';
}

}  // namespace log

}  // namespace clex
