#pragma once

#include <stdexcept>
#include <string>

namespace qeforge {

/// Runtime failure inside a pipeline operation (CLI exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input, configuration or precondition (CLI exit code 1).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace qeforge
