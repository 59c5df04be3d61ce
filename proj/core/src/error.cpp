#include "rox/error.hpp"

namespace rox {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIngest: return "ingest_error";
    case ErrorCode::kEmptyCorpus: return "empty_corpus";
    case ErrorCode::kDuplicateId: return "duplicate_record_id";
    case ErrorCode::kArgument: return "invalid_argument";
    case ErrorCode::kConfiguration: return "configuration_error";
    case ErrorCode::kDomain: return "unknown_label";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kUnsupportedVersion: return "unsupported_version";
    case ErrorCode::kLookup: return "not_found";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kConsistency: return "consistency_error";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kOracleRefused: return "oracle_refused";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace rox
