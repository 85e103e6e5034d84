#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace raysweep {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonConvergedUndistortion : public Error {
 public:
  using Error::Error;
};

class OutOfTrajectoryRange : public Error {
 public:
  using Error::Error;
};

class NoCommonTimeSpan : public Error {
 public:
  using Error::Error;
};

class InvalidDepthRange : public Error {
 public:
  using Error::Error;
};

class MisalignedDsi : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input. `where` is a line number for line-oriented formats
/// or a field path (e.g. "cameras[1].fx") for structured documents.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, const std::string& where,
             const std::string& what)
      : Error(source + ":" + where + ": " + what), where_(where) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class NonMonotonicTimestamps : public ParseError {
 public:
  using ParseError::ParseError;
};

class QuaternionNormError : public ParseError {
 public:
  using ParseError::ParseError;
};

class InsufficientCameras : public Error {
 public:
  using Error::Error;
};

class MotionTooFastForStep : public Error {
 public:
  using Error::Error;
};

class UnknownScenario : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace raysweep
