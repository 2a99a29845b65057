#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seiznet {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or scenario settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or corrupted file contents.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN / infinite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Sequences that must be aligned (same length / same clock) are not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A metric whose denominator is zero.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

/// PPM chip majority inconclusive or payload CRC mismatch.
class DecodeError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Scenario cannot run (e.g. a node without a MAC schedule).
class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage ran before the stage producing its inputs.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace seiznet
