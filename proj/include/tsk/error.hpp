#pragma once

#include <stdexcept>
#include <string>

namespace tsk {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  Success = 0,
  Validation = 2,
  Format = 3,
  Numerical = 4,
};

/// Base of every error thrown by the library. Carries the exit code the CLI
/// should report.
class Error : public std::runtime_error {
public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

private:
  ExitCode code_;
};

/// Invalid input data or configuration (duplicate ids, bad ranges, ...).
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what)
      : Error(ExitCode::Validation, what) {}
};

/// Configuration error, reported before any computation starts.
class ConfigError : public ValidationError {
public:
  explicit ConfigError(const std::string& what) : ValidationError(what) {}
};

/// Malformed file contents (TSV parse errors, corrupt KMAT or model files).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& what)
      : Error(ExitCode::Format, what) {}
};

/// A linear solve or transform produced a non-finite or inaccurate result.
class NumericalError : public Error {
public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::Numerical, what) {}
};

}  // namespace tsk
