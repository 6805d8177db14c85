#pragma once

#include <stdexcept>
#include <string>

namespace ipfp {

// Malformed input or a violated precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iteration cap was hit before the requested tolerance.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ipfp
