#pragma once

#include <stdexcept>
#include <string>

namespace geopatch {

/// Coarse failure category. The CLI maps these onto process exit codes.
enum class ErrorCategory { Usage, Data, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// A precondition on numeric or geometric input was violated.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

/// Input data is well-formed but inconsistent (CRS mismatch, missing band, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::Usage, what) {}
};

}  // namespace geopatch
