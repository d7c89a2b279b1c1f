#pragma once

#include <stdexcept>
#include <string>

namespace formation {

/// Base class for every error raised by the library. The code string is the
/// machine-readable category surfaced by the CLI and the HTTP service.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error("bad_request", message) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& message)
      : Error("invariant_violation", message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class TrainError : public Error {
 public:
  explicit TrainError(const std::string& message) : Error("training_failed", message) {}
};

}  // namespace formation
