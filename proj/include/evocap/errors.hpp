#pragma once

#include <stdexcept>
#include <string>

namespace evocap {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing on-disk data.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration or arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace evocap
