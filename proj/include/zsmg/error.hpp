#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zsmg {

enum class ErrorKind {
  invalid_input,
  dimension_mismatch,
  numerical,
  not_converged,
  certification_failed,
  infeasible,
  degenerate,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::not_converged: return "not_converged";
    case ErrorKind::certification_failed: return "certification_failed";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Single exception type for every domain failure in the library. The kind
/// is what callers (and the CLI) dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace detail
}  // namespace zsmg
