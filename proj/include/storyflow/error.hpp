#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace storyflow {

/// Base of every error thrown by the library. `code()` is a short stable token
/// ("PathNotFound", "XmlSyntax", ...) suitable for tests and wire responses.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

enum class ScriptPhase { Lex, Parse, Runtime };

inline const char* to_string(ScriptPhase p) {
  switch (p) {
    case ScriptPhase::Lex: return "lex";
    case ScriptPhase::Parse: return "parse";
    case ScriptPhase::Runtime: return "runtime";
  }
  return "?";
}

struct SourcePos {
  int line = 0;
  int column = 0;
  bool operator==(const SourcePos&) const = default;
};

class ScriptError : public Error {
public:
  ScriptError(ScriptPhase phase, const std::string& message, SourcePos pos,
              std::string code = "ScriptError")
      : Error(std::move(code), format(phase, message, pos)),
        phase_(phase),
        pos_(pos),
        detail_(message) {}

  ScriptPhase phase() const noexcept { return phase_; }
  SourcePos pos() const noexcept { return pos_; }
  int line() const noexcept { return pos_.line; }
  int column() const noexcept { return pos_.column; }
  const std::string& detail() const noexcept { return detail_; }

private:
  static std::string format(ScriptPhase phase, const std::string& message, SourcePos pos) {
    std::string out = to_string(phase);
    out += " error";
    if (pos.line > 0) {
      out += " at " + std::to_string(pos.line) + ":" + std::to_string(pos.column);
    }
    out += ": " + message;
    return out;
  }

  ScriptPhase phase_;
  SourcePos pos_;
  std::string detail_;
};

}  // namespace storyflow
