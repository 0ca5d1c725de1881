#pragma once

#include <stdexcept>
#include <string>

namespace ctgpt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shape, bad index, bad enum value: the caller passed something invalid.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncated payload, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong state (e.g. optimizer step without gradients).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A documented pre/post condition was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Corpus or record content is unusable.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Run configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A referenced file or directory does not exist or cannot be opened.
class PathError : public Error {
 public:
  using Error::Error;
};

/// Synthetic corpus generation could not satisfy the request.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctgpt
