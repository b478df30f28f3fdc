#pragma once

#include <stdexcept>
#include <string>

namespace earlycast {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or graph shape disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent trial data, files, or configuration values.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or otherwise diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace earlycast
