#pragma once

#include <stdexcept>
#include <string>

namespace scope3 {

/// Base class of every error raised by the library. The CLI maps these to
/// exit code 1 (user error); anything else is treated as internal.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message names the source and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates an invariant (duplicate code, bad label, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Operation called on an object that is not in the required state.
class StateError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class MissingClassError : public LookupError {
 public:
  using LookupError::LookupError;
};

class MissingFactorError : public LookupError {
 public:
  using LookupError::LookupError;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Numeric operation undefined for its arguments (zero-norm cosine, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Embedding provider or encoder failed or could not be resolved.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

}  // namespace scope3
