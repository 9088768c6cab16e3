#pragma once

#include <stdexcept>
#include <string>

namespace scorelab {

/// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition that callers must uphold was violated.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A numeric parameter is outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The requested computation is not supported for these inputs (e.g. an
/// exact Jacobian in too many dimensions, or a dataset without an analytic score).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sampler or integrator left the finite range.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scorelab
