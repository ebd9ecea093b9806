#pragma once

#include <stdexcept>
#include <string>

namespace stylegen {

// Every error carries a short machine-parsable kind; the CLI prints
// "error: <kind>: <message>" on one line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define STYLEGEN_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(tag, message) {}    \
  };

STYLEGEN_DEFINE_ERROR(ParameterError, "parameter")
STYLEGEN_DEFINE_ERROR(TooShortError, "too_short")
STYLEGEN_DEFINE_ERROR(DegenerateEmbeddingError, "degenerate_embedding")
STYLEGEN_DEFINE_ERROR(NumericError, "numeric")
STYLEGEN_DEFINE_ERROR(CorruptionError, "corruption")
STYLEGEN_DEFINE_ERROR(IoError, "io")
STYLEGEN_DEFINE_ERROR(VersionError, "version")
STYLEGEN_DEFINE_ERROR(TruncationError, "truncated")
STYLEGEN_DEFINE_ERROR(ShapeError, "shape")
STYLEGEN_DEFINE_ERROR(CompatibilityError, "compatibility")
STYLEGEN_DEFINE_ERROR(ConfigError, "config")

#undef STYLEGEN_DEFINE_ERROR

}  // namespace stylegen
