#pragma once

#include <stdexcept>
#include <string>

namespace iclmpc {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible vector/matrix dimensions.
struct DimensionError : Error {
  using Error::Error;
};

/// Point cloud whose affine hull is lower-dimensional than the ambient space.
struct DegenerateCloudError : Error {
  int affine_rank;
  DegenerateCloudError(const std::string& what, int rank)
      : Error(what), affine_rank(rank) {}
};

/// Requested operation is not implemented for this dimension.
struct UnsupportedDimensionError : Error {
  using Error::Error;
};

/// A set turned out to be empty where a nonempty one was required.
struct EmptySetError : Error {
  using Error::Error;
};

/// LP objective unbounded in the requested direction.
struct UnboundedError : Error {
  using Error::Error;
};

/// Disturbance sampling asked for a support shape it cannot draw from.
struct UnsupportedDistributionError : Error {
  using Error::Error;
};

/// Training data contains only one class.
struct SingleClassError : Error {
  using Error::Error;
};

/// Iterative numerical routine failed to converge.
struct ConvergenceError : Error {
  using Error::Error;
};

/// Invalid argument value (out of range, malformed, inconsistent).
struct InvalidArgumentError : Error {
  using Error::Error;
};

/// Malformed or inconsistent scenario/configuration input.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace iclmpc
