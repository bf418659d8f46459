#pragma once

#include <stdexcept>
#include <string>

namespace dilute {

/// A parameter is outside the domain an operation accepts.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A shape or anchor does not fit inside the lattice it is placed on.
class OutOfBounds : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// An exact computation was asked to run above its size cap.
class ResourceLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sampler exhausted its budget (e.g. CFTP did not coalesce).
class Timeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hard invariant (monotone ordering, support membership) failed.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dilute
