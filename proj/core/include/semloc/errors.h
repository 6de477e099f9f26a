#pragma once

#include <stdexcept>
#include <string>

namespace semloc {

// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text or binary header. The message carries the file and,
// for text formats, the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, int line, const std::string& what);
  ParseError(const std::string& file, const std::string& what);
};

// Cross-reference failure in otherwise well-formed data (dangling ids,
// asymmetric tracks, missing companion files).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownLabel : public Error {
 public:
  using Error::Error;
};

class BadMagic : public Error {
 public:
  using Error::Error;
};

class TruncatedFile : public Error {
 public:
  using Error::Error;
};

// Descriptor dimensionality disagreement between two operands.
class DimMismatch : public Error {
 public:
  using Error::Error;
};

class TooFewDescriptors : public Error {
 public:
  using Error::Error;
};

// A camera center coincides with the 3D point it observes.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

// Collinear or coincident points handed to a minimal solver.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class NoRealSolution : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace semloc
