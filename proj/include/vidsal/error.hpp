#pragma once

#include <stdexcept>
#include <string>

namespace vidsal {

// Base for every error raised by the library. `code()` is a short
// machine-parsable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& message) : Error("value", message) {}
};

// NaN or infinity reached an operator.
class NonFiniteError : public ValueError {
 public:
  explicit NonFiniteError(const std::string& message) : ValueError(message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& message) : Error("diverged", message) {}
};

}  // namespace vidsal
