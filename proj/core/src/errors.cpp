#include "mixteach/errors.hpp"

namespace mixteach {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kMissingP2: return "MissingP2";
    case ErrorCode::kMalformedCalib: return "MalformedCalib";
    case ErrorCode::kPatchTooSmall: return "PatchTooSmall";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyPools: return "EmptyPools";
    case ErrorCode::kEmptyInstanceDatabase: return "EmptyInstanceDatabase";
    case ErrorCode::kCalibrationMismatch: return "CalibrationMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kValidationError: return "ValidationError";
    case ErrorCode::kMissingPredictions: return "MissingPredictions";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

int ExitStatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError:
    case ErrorCode::kValidationError:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformedLine:
    case ErrorCode::kMalformedCalib:
    case ErrorCode::kCalibrationMismatch:
      return 2;
    case ErrorCode::kFileNotFound:
    case ErrorCode::kMissingPredictions:
    case ErrorCode::kMissingP2:
    case ErrorCode::kEmptyPools:
    case ErrorCode::kEmptyInstanceDatabase:
      return 3;
    default:
      return 4;
  }
}

MalformedLineError::MalformedLineError(std::size_t line_no, std::string text,
                                       const std::string& why)
    : Error(ErrorCode::kMalformedLine,
            "line " + std::to_string(line_no) + ": " + why + ": '" + text + "'"),
      line_no_(line_no),
      text_(std::move(text)) {}

}  // namespace mixteach
