#pragma once

#include <stdexcept>
#include <string>

namespace xling {

// Bad command line or configuration. Maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files, failed validation, violated preconditions on data. Exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A quantity is mathematically undefined for the given input (zero variance,
// all-undefined aggregates). Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xling
