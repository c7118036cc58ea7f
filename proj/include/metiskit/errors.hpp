#pragma once

#include <stdexcept>

namespace metiskit {

// Bad argument values: invalid action index, mismatched shapes, N = 0, ...
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Structural contract violations in topologies, hypergraphs, datasets.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed external input files; message carries the row number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Environment cannot be positioned at a requested state.
class UnsupportedStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough samples/triples to produce a meaningful result.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration rejected before any pipeline work starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metiskit
