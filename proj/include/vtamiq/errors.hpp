#pragma once

#include <stdexcept>
#include <string>

namespace vtamiq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// An image does not have the expected RGB channels.
class ChannelError : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle observed a non-deterministic objective.
class OracleError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

/// Correlation is undefined (e.g. one argument has zero variance).
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtamiq
