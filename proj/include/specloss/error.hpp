#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specloss {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented range or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Input data is unusable (non-finite, negative counts, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// The call itself is wrong: mismatched shapes, wrong sinogram domain.
class UsageError : public Error {
 public:
  using Error::Error;
};

// An array is too small for the requested operation.
class SizeError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Refusal to write a metric outside its mathematically possible range.
class MetricIntegrityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training diverged or produced a non-finite loss. Carries the per-epoch
// history recorded up to the failure.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

// A pipeline stage failed; `stage()` names it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace specloss
