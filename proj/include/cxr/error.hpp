#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

// Process exit codes of the command-line tool.
enum class ExitCode : int { Ok = 0, Validation = 1, Io = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Bad input data or configuration: invariant violations, malformed files.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::Validation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::Io, what) {}
};

// Non-finite values in training, features or gradients.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::Numeric, what) {}
};

}  // namespace cxr
