#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace als {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input exceeds a hard size budget (e.g. exhaustive simulation above 16 inputs).
class CapacityError : public Error {
public:
  using Error::Error;
};

/// Two operands disagree on input or output count.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

/// Malformed token sequence or text file. `position` is a token index
/// (sequences) or a 1-based line number (files).
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}

  std::size_t position() const noexcept { return position_; }

private:
  std::size_t position_;
};

/// No token survives masking for the current prefix.
class DeadEndError : public Error {
public:
  using Error::Error;
};

/// Search could not produce a circuit within the error bound and length budget.
class SynthesisFailure : public Error {
public:
  using Error::Error;
};

/// A produced or loaded artifact fails its own error check.
class VerificationError : public Error {
public:
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class DivergenceError : public Error {
public:
  using Error::Error;
};

}  // namespace als
