#pragma once

#include <stdexcept>
#include <string>

namespace genvideo {

enum class ErrorKind { io, validation, pipeline };

/// Error carrying a category; the CLI maps the category onto its exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error io_error(const std::string& message) { return Error(ErrorKind::io, message); }
inline Error validation_error(const std::string& message) {
  return Error(ErrorKind::validation, message);
}

/// Pipeline failure tagged with the stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(ErrorKind::pipeline, stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace genvideo
