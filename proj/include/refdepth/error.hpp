#pragma once

#include <stdexcept>
#include <string>

namespace refdepth {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable, or malformed on disk.
class IoError : public Error {
 public:
  using Error::Error;
};

// Degenerate geometry, non-finite values, diverged optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace refdepth
