#pragma once

#include <stdexcept>
#include <string>

namespace dan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition that is not a shape problem.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A position count does not factor the way an attention layout needs.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

// Dense N×N verification matrices requested above the configured bound.
class VerificationSizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class PgmErrorKind { unsupported_format, bad_header, bad_maxval, truncated };

class PgmError : public Error {
 public:
  PgmError(PgmErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  PgmErrorKind kind() const noexcept { return kind_; }

 private:
  PgmErrorKind kind_;
};

enum class CheckpointErrorKind { bad_magic, version_mismatch, crc_mismatch, truncated, tensor_mismatch };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace dan
