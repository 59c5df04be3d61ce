#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rox {

/// Machine-readable failure category. The service layer maps these onto
/// HTTP status codes and the CLI onto exit messages.
enum class ErrorCode {
  kIngest,
  kEmptyCorpus,
  kDuplicateId,
  kArgument,
  kConfiguration,
  kDomain,
  kParse,
  kUnsupportedVersion,
  kLookup,
  kValidation,
  kConsistency,
  kTransport,
  kOracleRefused,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Malformed artifact payload; `offset` is the byte position where decoding
/// stopped (0 when the structure is valid JSON but the schema is not).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error(ErrorCode::kParse, message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Remote endpoint failure. Always retryable from the caller's perspective.
class TransportError : public Error {
 public:
  TransportError(const std::string& endpoint, const std::string& detail)
      : Error(ErrorCode::kTransport,
              "request to " + endpoint + " failed: " + detail + " (retryable)"),
        endpoint_(endpoint) {}

  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
};

}  // namespace rox
