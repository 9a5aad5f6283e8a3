#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rateval {

/// Base class for every error raised by the toolkit. The category decides the
/// process exit code used by the command-line front end.
class Error : public std::runtime_error {
 public:
  enum class Category { config, input, provider, analysis };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Category::config, what) {}
};

/// Malformed record file. Carries the 1-based line number of the bad record.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(Category::input, file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Referential, uniqueness or range violation in otherwise well-formed input.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(Category::input, what) {}
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error(Category::provider, what) {}
};

/// Retryable provider failure: connection refused, timeout, 429 or 5xx.
class TransportError : public ProviderError {
 public:
  explicit TransportError(const std::string& what) : ProviderError(what) {}
};

class DimensionMismatch : public ProviderError {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : ProviderError("embedding dimension mismatch: expected " + std::to_string(expected) +
                      ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class AnalysisError : public Error {
 public:
  explicit AnalysisError(const std::string& what) : Error(Category::analysis, what) {}
};

/// QWK with a zero chance-disagreement denominator.
class UndefinedMetric : public AnalysisError {
 public:
  explicit UndefinedMetric(const std::string& what) : AnalysisError(what) {}
};

/// Exit codes of the command-line tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_config = 2,
  exit_input = 3,
  exit_provider = 4,
  exit_analysis = 5,
};

inline ExitCode exit_code_for(Error::Category category) {
  switch (category) {
    case Error::Category::config:
      return exit_config;
    case Error::Category::input:
      return exit_input;
    case Error::Category::provider:
      return exit_provider;
    case Error::Category::analysis:
      return exit_analysis;
  }
  return exit_failure;
}

}  // namespace rateval
