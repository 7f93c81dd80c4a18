#pragma once

#include <stdexcept>
#include <string>

namespace lbkd {

// Base of every error raised by the library. `kind()` is a stable tag that
// callers (the CLI in particular) use to pick exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& what) : Error("value", what) {}
};

struct TapeError : Error {
  explicit TapeError(const std::string& what) : Error("tape", what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& what) : Error("training", what) {}
};

}  // namespace lbkd
