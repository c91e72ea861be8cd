// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddnet {

enum class ErrorKind {
  argument,
  io,
  format,
  dataset,
  checkpoint,
  numeric,
  resource,
};

/// Stable lowercase tag used in CLI diagnostics ("error[io]: ...").
constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::dataset: return "dataset";
    case ErrorKind::checkpoint: return "checkpoint";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::resource: return "resource";
  }
  return "unknown";
}

/// Process exit code for each category; 0 is reserved for success.
constexpr int exit_code(ErrorKind kind) { return 2 + static_cast<int>(kind); }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::argument, what);
}

}  // namespace ddnet
