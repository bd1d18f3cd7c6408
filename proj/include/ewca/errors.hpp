#pragma once

#include <stdexcept>
#include <string>

namespace ewca {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

// Thrown by the standard-domain Sinkhorn kernel when exp(-C/eps) underflows;
// the caller is expected to retry in the log domain.
class NumericalUnderflow : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class RaggedRows : public ParseError {
 public:
  using ParseError::ParseError;
};

class NonNumericCell : public ParseError {
 public:
  using ParseError::ParseError;
};

class UnknownLabelColumn : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace ewca
