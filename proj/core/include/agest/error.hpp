#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace agest {

// Base for every error raised by the library. Callers that only care about
// "something in agest failed" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values fed into a primitive.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Weight / graph-spec / manifest files that do not parse.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A weight file that ends early. Carries the offset at which more bytes were
// expected.
class TruncatedError : public FormatError {
 public:
  TruncatedError(const std::string& what, std::size_t offset)
      : FormatError(what + " (truncated at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Graph or weights that do not match a layer's declared shape.
class LayerError : public Error {
 public:
  LayerError(std::string layer, const std::string& what)
      : Error("layer '" + layer + "': " + what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

// Image containers that cannot be decoded.
class DecodeError : public Error {
 public:
  DecodeError(std::string format, const std::string& what)
      : Error("decode error (" + format + "): " + what), format_(std::move(format)) {}
  const std::string& format() const noexcept { return format_; }

 private:
  std::string format_;
};

// Requests for a metric the data cannot support (e.g. epsilon-error without
// vote statistics).
class UnsupportedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace agest
