#pragma once

#include <stdexcept>
#include <string>

namespace annodesk {

/// Error categories. The HTTP layer maps each one to a status code.
enum class ErrorKind {
  parse,          // malformed campaign/log syntax
  validation,     // well-formed input that violates a schema or invariant
  authorization,  // unknown token or role mismatch
  conflict,       // duplicate submission, duplicate campaign id
  state,          // operation not allowed in the current state
  not_found,
  unsupported_mode,
  configuration,
  input,          // bad arguments to a numeric routine
  evaluation,     // a rule that cannot be adjudicated
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse_error";
    case ErrorKind::validation: return "validation_error";
    case ErrorKind::authorization: return "authorization_error";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::state: return "state_error";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::unsupported_mode: return "unsupported_mode";
    case ErrorKind::configuration: return "configuration_error";
    case ErrorKind::input: return "input_error";
    case ErrorKind::evaluation: return "evaluation_error";
    case ErrorKind::io: return "io_error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Schema violation; `path()` names the offending location, e.g. `info.protocol`.
class ValidationError : public Error {
 public:
  ValidationError(std::string path, const std::string& message)
      : Error(ErrorKind::validation, path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ", column " +
                                    std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace annodesk
