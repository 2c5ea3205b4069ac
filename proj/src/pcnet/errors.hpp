#pragma once

#include <stdexcept>
#include <string>

namespace pcnet {

// Every library failure derives from Error. The category maps onto the
// status codes of the C API (and from there onto CLI exit codes).
enum class ErrorCategory {
  kUsage = 2,      // bad arguments, configuration, shape contracts
  kNumerical = 3,  // NaN/Inf in a loss, domain errors
  kIo = 4,         // files, checksums, decoding
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kUsage, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::kUsage, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::kUsage, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(ErrorCategory::kUsage, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

class ChecksumError : public IoError {
 public:
  explicit ChecksumError(const std::string& what) : IoError(what) {}
};

class VersionError : public IoError {
 public:
  explicit VersionError(const std::string& what) : IoError(what) {}
};

}  // namespace pcnet
