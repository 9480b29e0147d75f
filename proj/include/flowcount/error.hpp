#pragma once

#include <stdexcept>
#include <string>

namespace flowcount {

/// Malformed or inconsistent input data (observations, scene, config files).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver could not produce a solution for a structurally valid problem.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace flowcount
