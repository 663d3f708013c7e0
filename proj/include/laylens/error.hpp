#pragma once

#include <stdexcept>
#include <string>

namespace laylens {

// Base of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a type invariant or an operation precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Stored content no longer matches its digest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Write attempted on a job that already reached a terminal state.
class TerminalImmutableError : public Error {
 public:
  TerminalImmutableError() : Error("terminal immutable") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bytes that were supposed to be an image could not be decoded.
class DecodeError : public Error {
 public:
  using Error::Error;
};

}  // namespace laylens
