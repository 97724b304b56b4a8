#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/error.hpp"
#include "contamkit/trace.hpp"

namespace contamkit {

enum class Role { system, user, assistant };
std::string to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::user;
  std::string text;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::optional<std::string> system_prompt;  // folded into messages[0] on the wire
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  bool want_logprobs = false;
};

// Enforces: non-empty model_id, temperature in [0,2], max_tokens >= 1,
// non-empty messages alternating user/assistant starting with user
// (system text only via system_prompt or a single leading message).
void validate_chat_request(const ChatRequest& req);

// Canonical JSON of (model_id, messages-with-system-folded, temperature);
// sorted keys, compact. Basis of the replay fingerprint.
nlohmann::json canonical_request_json(const ChatRequest& req);
// SHA-256 hex over canonical_request_json; keys replay tapes.
std::string request_fingerprint(const ChatRequest& req);
// SHA-256 hex over the full request (adds max_tokens, want_logprobs);
// keys the temperature-0 disk cache.
std::string cache_key(const ChatRequest& req);
// Fingerprint for score_text calls (model_id, prefix, continuation).
std::string score_fingerprint(std::string_view model_id, std::string_view prefix,
                              std::string_view continuation);

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  bool operator==(const TokenLogprob&) const = default;
};

struct Usage {
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  std::string finish_reason = "stop";
  Usage usage;

  bool operator==(const ChatResponse&) const = default;
};

nlohmann::json response_to_json(const ChatResponse& r);
ChatResponse response_from_json(const nlohmann::json& j);

// Transport interface. chat() issues one conversation turn; score_text()
// returns per-token logprobs over prefix+continuation with answer_start at
// the first continuation token (identity fields left for the caller).
// Implementations throw TransientError for retryable failures.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual ChatResponse chat(const ChatRequest& req) = 0;
  virtual TokenTrace score_text(const std::string& model_id, const std::string& prefix,
                                const std::string& continuation) = 0;
};

// OpenAI-compatible HTTP transport. chat -> POST {base}/chat/completions;
// score_text -> POST {base}/completions with echo+logprobs and max_tokens 0
// (the one widely deployed way to obtain prompt logprobs). Endpoints that
// cannot return the requested logprobs raise Error(capability).
struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string api_key;
  int timeout_s = 120;
};

class HttpBackend : public LlmBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ChatResponse chat(const ChatRequest& req) override;
  TokenTrace score_text(const std::string& model_id, const std::string& prefix,
                        const std::string& continuation) override;

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body);
  HttpBackendConfig config_;
  std::string host_;         // scheme://authority
  std::string path_prefix_;  // e.g. /v1
};

// Deterministic offline transport. Chat replies come from a tape keyed by
// request fingerprint (a queue per fingerprint: entries pop in order, the
// last one repeats). score_text serves keyed entries when present and
// otherwise whitespace-tokenizes with a fixed per-token logprob. Thread-safe;
// every request is logged for inspection.
class MockBackend : public LlmBackend {
 public:
  struct Options {
    // Unmatched fingerprint: strict -> Error(parse) naming the fingerprint;
    // otherwise reply with default_text.
    bool strict = true;
    std::string default_text = "OK";
    double fixed_logprob = -1.0;
    int fail_transient_first = 0;  // throw TransientError for the first N chats
    int delay_ms = 0;              // per-call sleep, for concurrency tests
  };

  MockBackend() = default;
  explicit MockBackend(Options options) : options_(options) {}

  void add_response(const ChatRequest& req, ChatResponse resp);
  void add_response(const std::string& fingerprint, ChatResponse resp);
  void add_score(const std::string& model_id, const std::string& prefix,
                 const std::string& continuation, TokenTrace trace);
  // Tape JSONL: {"request": {...}, "response": {...}} or
  // {"fingerprint": "...", "response": {...}} or
  // {"score": {"model_id","prefix","continuation"}, "trace": {...}}.
  void load_tape(const std::string& path);

  ChatResponse chat(const ChatRequest& req) override;
  TokenTrace score_text(const std::string& model_id, const std::string& prefix,
                        const std::string& continuation) override;

  std::vector<ChatRequest> chat_log() const;

 private:
  Options options_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::deque<ChatResponse>> tape_;
  std::unordered_map<std::string, TokenTrace> score_tape_;
  std::vector<ChatRequest> chat_log_;
  int transient_remaining_ = -1;
};

struct LlmClientConfig {
  int max_attempts = 5;
  double backoff_base_ms = 250.0;  // doubles each attempt, plus jitter
  double backoff_max_ms = 8000.0;
  uint64_t jitter_seed = 0x7d0f1ac3u;  // fixed so runs are reproducible
  int max_inflight = 4;                // concurrent backend calls
  double requests_per_minute = 0.0;    // 0 = unlimited
  std::string cache_dir;               // empty = caching off
};

// Policy wrapper around a backend: bounded in-flight concurrency, a
// client-side token bucket, exponential backoff with jitter on transient
// failures, and an on-disk response cache for temperature-0 chat requests.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<LlmBackend> backend, LlmClientConfig config);

  ChatResponse chat(const ChatRequest& req);
  TokenTrace score_text(const std::string& model_id, const std::string& prefix,
                        const std::string& continuation);

  int64_t network_calls() const { return network_calls_.load(); }
  int64_t cache_hits() const { return cache_hits_.load(); }

 private:
  class InflightSlot;
  void acquire_rate_token();
  template <typename Fn>
  auto with_policies(Fn&& call) -> decltype(call());

  std::shared_ptr<LlmBackend> backend_;
  LlmClientConfig config_;
  std::atomic<int64_t> network_calls_{0};
  std::atomic<int64_t> cache_hits_{0};

  std::mutex inflight_mu_;
  std::condition_variable inflight_cv_;
  int inflight_ = 0;

  std::mutex bucket_mu_;
  double bucket_allowance_ = 0.0;
  std::chrono::steady_clock::time_point bucket_last_{};
  bool bucket_init_ = false;

  std::mutex jitter_mu_;
  uint64_t jitter_state_;
};

// Runs fn(i) for i in [0, count) on up to `workers` threads; exceptions are
// captured and the first one (by index) is rethrown after all threads join.
void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn);

}  // namespace contamkit
