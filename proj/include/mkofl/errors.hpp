#pragma once

#include <stdexcept>
#include <string>

namespace mkofl {

// Invalid counts, conflicting hyperparameters, infeasible horizons.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or unusable input data.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vector or matrix dimensions that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A message or call that violates the round protocol.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mkofl
