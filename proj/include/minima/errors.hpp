#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace minima {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed network description or incompatible layer dimensions.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration (bad JSON, out-of-range fields).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidBatchError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up. `layer` is set when the failure can be pinned
/// to a network layer.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::optional<std::size_t> layer = {},
                        std::vector<double> point = {})
      : Error(what), layer_(layer), point_(std::move(point)) {}

  std::optional<std::size_t> layer() const { return layer_; }
  const std::vector<double>& point() const { return point_; }

 private:
  std::optional<std::size_t> layer_;
  std::vector<double> point_;
};

/// Training produced a non-finite loss. Carries the last finite iterate.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::vector<double> last_finite)
      : Error(what), last_finite_(std::move(last_finite)) {}
  const std::vector<double>& last_finite() const { return last_finite_; }

 private:
  std::vector<double> last_finite_;
};

/// Corrupted or truncated binary input (IDX, snapshot files).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class FileError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace minima
