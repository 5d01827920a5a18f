#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prag {

enum class ErrorCode {
  EmptyText,
  RecordError,
  DuplicateId,
  DimMismatch,
  BackendError,
  MissingEmbedding,
  ZeroText,
  EmptyIndex,
  BadK,
  FormatError,
  TruncatedFile,
  IncompatibleIndex,
  MissingGold,
  TemplateError,
  Timeout,
  ProtocolError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Toolkit-wide exception. `code()` identifies the failure class; the message
/// carries the specifics (line numbers, keys, paths).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prag
