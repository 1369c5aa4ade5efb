#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agentjoule {

// Root of every error raised by the library. Subclasses let callers map
// failures to CLI exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed textual input (log line, diff hunk, config, script).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a structural invariant (ordering, ids).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Analysis cannot proceed on the given sample.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

class SampleSizeError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class SingularDesignError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Transport-level failure talking to a model endpoint; safe to retry.
class RetriableError : public Error {
 public:
  using Error::Error;
};

class ScriptExhaustedError : public Error {
 public:
  using Error::Error;
};

}  // namespace agentjoule
