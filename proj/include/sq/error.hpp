#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands (or an empty operand).
struct DimensionError : Error {
  using Error::Error;
};

// An argument outside its documented domain.
struct ParameterError : Error {
  using Error::Error;
};

// A pipeline stage invoked without its required inputs (missing static
// scales, uncovered smoothing attachment point, bad run configuration).
struct ConfigError : Error {
  using Error::Error;
};

// Values that violate a data invariant (non-positive scale, channel max
// exceeding the tensor max).
struct DataError : Error {
  using Error::Error;
};

// Thrown when asked to fold smoothing factors into an operation that has
// no parameters to fold them into (e.g. a residual add).
struct NotFusableError : Error {
  using Error::Error;
};

// Scale vectors laid out along the inner (contraction) dimension of a
// matrix product. Integer GEMM can only rescale along outer dimensions.
struct UnsupportedGranularityError : Error {
  using Error::Error;
};

// A pipeline stage artifact (calibration result, smoothing plan) that has
// not been produced yet.
struct MissingArtifactError : Error {
  using Error::Error;
};

// Filesystem failures: unreadable or unwritable paths.
struct IoError : Error {
  using Error::Error;
};

// Malformed container bytes; carries the offset of the first bad byte.
class FormatError : public Error {
public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

}  // namespace sq
