#pragma once

#include <stdexcept>
#include <string>

namespace pcr {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Geometry that admits no unique answer: zero plane normal, collinear
/// point sets, coincident trajectories.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Projection requested for a point at or behind the camera plane.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// Fewer samples than the operation's minimum.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Pose refinement lacks enough independent constraints.
class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; message names the file and line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a structural requirement (e.g. a rotation
/// too far from orthonormal to repair).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Paired inputs whose sizes or associations do not line up.
class MismatchError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure; message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A scene configuration that cannot produce usable frames.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace pcr
