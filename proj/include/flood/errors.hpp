#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flood {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or raster extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data. Carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

// Caller misuse: bad flags, empty splits, non-scalar loss.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Configuration or manifest content that fails a range/consistency check.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A label raster holds a value outside {0, 1, -1}.
class LabelDomainError : public Error {
 public:
  LabelDomainError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace flood
