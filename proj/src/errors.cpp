#include "prag/errors.hpp"

namespace prag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyText: return "empty-text";
    case ErrorCode::RecordError: return "record-error";
    case ErrorCode::DuplicateId: return "duplicate-id";
    case ErrorCode::DimMismatch: return "dim-mismatch";
    case ErrorCode::BackendError: return "backend-error";
    case ErrorCode::MissingEmbedding: return "missing-embedding";
    case ErrorCode::ZeroText: return "zero-text";
    case ErrorCode::EmptyIndex: return "empty-index";
    case ErrorCode::BadK: return "bad-k";
    case ErrorCode::FormatError: return "format-error";
    case ErrorCode::TruncatedFile: return "truncated-file";
    case ErrorCode::IncompatibleIndex: return "incompatible-index";
    case ErrorCode::MissingGold: return "missing-gold";
    case ErrorCode::TemplateError: return "template-error";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::ProtocolError: return "protocol-error";
    case ErrorCode::ConfigError: return "config-error";
  }
  return "unknown-error";
}

}  // namespace prag
