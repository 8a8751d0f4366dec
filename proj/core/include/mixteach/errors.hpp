#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace mixteach {

enum class ErrorCode {
  kBehindCamera,
  kMalformedLine,
  kFileNotFound,
  kIoFailure,
  kMissingP2,
  kMalformedCalib,
  kPatchTooSmall,
  kShapeMismatch,
  kEmptyPools,
  kEmptyInstanceDatabase,
  kCalibrationMismatch,
  kParseError,
  kValidationError,
  kMissingPredictions,
  kInvalidArgument,
  kInternal,
};

std::string_view ErrorCodeName(ErrorCode code);

// Process exit status used by the command-line tool for an error of this kind:
// 2 invalid config or input data, 3 missing input, 4 internal error.
int ExitStatusFor(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class MalformedLineError : public Error {
 public:
  MalformedLineError(std::size_t line_no, std::string text, const std::string& why);

  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& text() const noexcept { return text_; }

 private:
  std::size_t line_no_;
  std::string text_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& reason)
      : Error(ErrorCode::kValidationError, field + ": " + reason),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace mixteach
