#pragma once

#include <stdexcept>
#include <string>

namespace dsm {

// Base of every error thrown by the library. kind() is a stable short tag used
// by the CLI to emit machine-parsable diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error("shape_mismatch", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

// Binary container errors. Each failure mode has its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  explicit BadMagicError(const std::string& what) : FormatError("bad_magic", what) {}
};

class DimensionError : public FormatError {
 public:
  explicit DimensionError(const std::string& what) : FormatError("bad_dimension", what) {}
};

class TruncatedError : public FormatError {
 public:
  explicit TruncatedError(const std::string& what) : FormatError("truncated", what) {}
};

class SingularSystemError : public Error {
 public:
  explicit SingularSystemError(const std::string& what) : Error("singular_system", what) {}
};

class NonFiniteGradientError : public Error {
 public:
  explicit NonFiniteGradientError(const std::string& what) : Error("non_finite_gradient", what) {}
};

class StaleCacheError : public Error {
 public:
  explicit StaleCacheError(const std::string& what) : Error("stale_cache", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace dsm
