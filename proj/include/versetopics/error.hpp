#pragma once

#include <stdexcept>
#include <string>

namespace versetopics {

/// Malformed or missing input (files, config values, shapes).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage produced nothing to work with (e.g. no lemma survived filtering).
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: degenerate fits, every run gated out, and the like.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace versetopics
