#pragma once

#include <stdexcept>
#include <string>

namespace seqft {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor shapes incompatible with the requested operation.
class DimensionError : public Error {
  using Error::Error;
};

// An API contract was violated by the caller (misuse, not bad data).
class ContractError : public Error {
  using Error::Error;
};

// Invalid configuration or invalid input data.
class ConfigError : public Error {
  using Error::Error;
};

// Filesystem access failed.
class IoError : public Error {
  using Error::Error;
};

// On-disk content is malformed.
class FormatError : public Error {
  using Error::Error;
};

// Stored checksum does not match the payload.
class ChecksumError : public Error {
  using Error::Error;
};

// A metric is undefined for the given inputs.
class EvalError : public Error {
  using Error::Error;
};

}  // namespace seqft
