#pragma once

#include <stdexcept>
#include <string>

namespace arrad {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class KindMismatch : public Error {
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

class ChainError : public Error {
 public:
  using Error::Error;
};

// Raised by the C backend when a term has no loop-nest translation.
class ExtractionFailure : public Error {
 public:
  ExtractionFailure(const std::string& reason, std::string subterm)
      : Error(reason + ": " + subterm), subterm_(std::move(subterm)) {}
  const std::string& subterm() const { return subterm_; }

 private:
  std::string subterm_;
};

// The external toolchain (C compiler) could not be used.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace arrad
