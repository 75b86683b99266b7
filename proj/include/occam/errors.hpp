#pragma once

#include <stdexcept>
#include <string>

namespace occam {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A parameter vector that cannot describe a mixture (e.g. all-zero amplitudes).
class DegenerateParameterError : public Error {
public:
  using Error::Error;
};

/// Rank-deficient spatial Jacobian where a full-rank one is required.
class DegenerateJacobianError : public Error {
public:
  using Error::Error;
};

/// Non-finite intermediate values at a specific data point.
class EvaluationError : public Error {
public:
  EvaluationError(const std::string& what, std::size_t point)
      : Error(what + " (data point " + std::to_string(point) + ")"), point_(point) {}

  std::size_t point() const noexcept { return point_; }

private:
  std::size_t point_;
};

class FitFailure : public Error {
public:
  using Error::Error;
};

/// Delta-m repair could not make Q finite.
class IrreparableError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed, mis-versioned or invariant-violating model / dataset files.
class FormatError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace occam
