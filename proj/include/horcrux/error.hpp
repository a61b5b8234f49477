#pragma once

#include <stdexcept>
#include <string>

namespace horcrux {

/// Broad failure classes. The CLI maps these onto exit codes.
enum class ErrorKind {
  invalid_parameter,
  invalid_input,
  insufficient_data,
  out_of_range,
  no_signal,
  undefined_snr,
  undefined_correlation,
  division_by_zero,
  io,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::out_of_range: return "range";
    case ErrorKind::no_signal: return "no-signal";
    case ErrorKind::undefined_snr: return "undefined-snr";
    case ErrorKind::undefined_correlation: return "undefined-correlation";
    case ErrorKind::division_by_zero: return "division";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace horcrux
