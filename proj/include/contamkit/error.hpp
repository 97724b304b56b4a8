#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace contamkit {

// Machine-readable failure categories. The CLI maps every Error to a
// single-line JSON object on stderr and exit code 1; usage mistakes are
// handled by the argument parser and exit 2 instead.
enum class ErrorCode {
  io,                 // file/network trouble
  parse,              // malformed input (JSON, profile file, model reply)
  invariant,          // data violates a documented invariant
  parameter,          // out-of-range argument to an operation
  pairing,            // mismatched trace pair (ids/variants/models)
  config,             // bad or missing configuration
  capability,         // backend cannot provide what was asked (e.g. logprobs)
  auth,               // endpoint rejected credentials
  exhausted_retries,  // transient failures outlived the retry budget
  domain,             // request is well-formed but unanswerable (e.g. empty subset)
};

std::string to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string context = "")
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  ErrorCode code() const { return code_; }
  // Free-form locator: sample id, file path, line number, fingerprint.
  const std::string& context() const { return context_; }

 private:
  ErrorCode code_;
  std::string context_;
};

// Failures worth retrying with backoff (HTTP 429/5xx, dropped connections).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& message, std::string context = "")
      : Error(ErrorCode::io, message, std::move(context)) {}
};

}  // namespace contamkit
