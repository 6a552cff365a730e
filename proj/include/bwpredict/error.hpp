#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bwp {

enum class ErrorKind {
  schema,       // a required column is missing or a schema is malformed
  parse,        // an input cell or file could not be parsed
  empty_input,  // empty file or dataset
  config,       // invalid settings or arguments
  shape,        // tensor or window dimension mismatch
  training,     // optimizer diverged
  data,         // data does not satisfy an operation's precondition
  io,           // filesystem failures
  version,      // unknown serialization version
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty_input: return "empty_input";
    case ErrorKind::config: return "config";
    case ErrorKind::shape: return "shape";
    case ErrorKind::training: return "training";
    case ErrorKind::data: return "data";
    case ErrorKind::io: return "io";
    case ErrorKind::version: return "version";
  }
  return "unknown";
}

// All toolkit failures surface as this exception type; `kind()` lets callers
// (and the CLI) classify the failure without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace bwp
