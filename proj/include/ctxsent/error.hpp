#pragma once

#include <stdexcept>
#include <string>

namespace ctxsent {

/// Error categories. Numeric values are shared with the C API status codes.
enum class ErrorKind : int {
  InvalidArgument = 1,
  Validation = 2,
  Config = 3,
  Io = 4,
  Backend = 5,
  Capability = 6,
  MissingArtifact = 7,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorKind::Validation, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorKind::Config, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::Io, message) {}
};

/// Transport or server failure. `status` is the last HTTP status seen, 0 when
/// no response was received.
class BackendError : public Error {
 public:
  BackendError(const std::string& message, int status = 0)
      : Error(ErrorKind::Backend, message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// The backend cannot perform the requested operation (e.g. no likelihoods).
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& message)
      : Error(ErrorKind::Capability, message) {}
};

class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(const std::string& path)
      : Error(ErrorKind::MissingArtifact,
              "missing upstream artifact: " + path),
        path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace ctxsent
