#include "contamkit/llmclient.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "contamkit/hash.hpp"

namespace contamkit {

std::string to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "unknown";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error(ErrorCode::parse, "unknown role '" + std::string(s) + "'");
}

void validate_chat_request(const ChatRequest& req) {
  if (req.model_id.empty()) {
    throw Error(ErrorCode::parameter, "chat request has empty model_id");
  }
  if (!(req.temperature >= 0.0) || req.temperature > 2.0) {
    throw Error(ErrorCode::parameter,
                "temperature must lie in [0, 2], got " + std::to_string(req.temperature));
  }
  if (req.max_tokens < 1) {
    throw Error(ErrorCode::parameter, "max_tokens must be >= 1");
  }
  if (req.messages.empty()) {
    throw Error(ErrorCode::parameter, "chat request has no messages");
  }
  size_t first = 0;
  if (req.messages[0].role == Role::system) first = 1;
  if (first == req.messages.size()) {
    throw Error(ErrorCode::parameter, "chat request has only a system message");
  }
  for (size_t i = first; i < req.messages.size(); ++i) {
    Role expected = (i - first) % 2 == 0 ? Role::user : Role::assistant;
    if (req.messages[i].role != expected) {
      throw Error(ErrorCode::parameter,
                  "messages must alternate user/assistant starting with user "
                  "(message " + std::to_string(i) + " is " +
                      to_string(req.messages[i].role) + ")");
    }
  }
}

namespace {

// System text folded into a leading message so a request built with the
// system_prompt field and one built with an explicit message fingerprint
// identically.
std::vector<ChatMessage> folded_messages(const ChatRequest& req) {
  std::vector<ChatMessage> out;
  if (req.system_prompt && !req.system_prompt->empty()) {
    out.push_back({Role::system, *req.system_prompt});
  }
  out.insert(out.end(), req.messages.begin(), req.messages.end());
  return out;
}

}  // namespace

nlohmann::json canonical_request_json(const ChatRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : folded_messages(req)) {
    msgs.push_back({{"role", to_string(m.role)}, {"text", m.text}});
  }
  return {{"model_id", req.model_id}, {"messages", msgs}, {"temperature", req.temperature}};
}

std::string request_fingerprint(const ChatRequest& req) {
  return sha256_hex(canonical_request_json(req).dump());
}

std::string cache_key(const ChatRequest& req) {
  nlohmann::json j = canonical_request_json(req);
  j["max_tokens"] = req.max_tokens;
  j["want_logprobs"] = req.want_logprobs;
  return sha256_hex(j.dump());
}

std::string score_fingerprint(std::string_view model_id, std::string_view prefix,
                              std::string_view continuation) {
  nlohmann::json j = {{"model_id", std::string(model_id)},
                      {"prefix", std::string(prefix)},
                      {"continuation", std::string(continuation)}};
  return sha256_hex(j.dump());
}

nlohmann::json response_to_json(const ChatResponse& r) {
  nlohmann::json j;
  j["text"] = r.text;
  j["finish_reason"] = r.finish_reason;
  j["usage"] = {{"prompt_tokens", r.usage.prompt_tokens},
                {"completion_tokens", r.usage.completion_tokens}};
  if (r.token_logprobs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const TokenLogprob& tl : *r.token_logprobs) {
      arr.push_back({{"token", tl.token}, {"logprob", tl.logprob}});
    }
    j["token_logprobs"] = arr;
  }
  return j;
}

ChatResponse response_from_json(const nlohmann::json& j) {
  ChatResponse r;
  r.text = j.at("text").get<std::string>();
  if (j.contains("finish_reason")) r.finish_reason = j["finish_reason"].get<std::string>();
  if (j.contains("usage")) {
    r.usage.prompt_tokens = j["usage"].value("prompt_tokens", int64_t{0});
    r.usage.completion_tokens = j["usage"].value("completion_tokens", int64_t{0});
  }
  if (j.contains("token_logprobs") && !j["token_logprobs"].is_null()) {
    std::vector<TokenLogprob> tls;
    for (const auto& e : j["token_logprobs"]) {
      tls.push_back({e.at("token").get<std::string>(), e.at("logprob").get<double>()});
    }
    r.token_logprobs = std::move(tls);
  }
  return r;
}

// ---------------------------------------------------------------- HttpBackend

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const std::string& url = config_.base_url;
  size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorCode::config, "base_url needs a scheme", url);
  }
  size_t path = url.find('/', scheme + 3);
  if (path == std::string::npos) {
    host_ = url;
    path_prefix_.clear();
  } else {
    host_ = url.substr(0, path);
    path_prefix_ = url.substr(path);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

nlohmann::json HttpBackend::post_json(const std::string& path, const nlohmann::json& body) {
  httplib::Client client(host_);
  client.set_connection_timeout(config_.timeout_s);
  client.set_read_timeout(config_.timeout_s);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto result = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
  if (!result) {
    throw TransientError("connection failed: " + httplib::to_string(result.error()),
                         host_ + path_prefix_ + path);
  }
  if (result->status == 401 || result->status == 403) {
    throw Error(ErrorCode::auth, "endpoint rejected credentials (HTTP " +
                                     std::to_string(result->status) + ")");
  }
  if (result->status == 429 || result->status >= 500) {
    throw TransientError("HTTP " + std::to_string(result->status), result->body);
  }
  if (result->status != 200) {
    throw Error(ErrorCode::io, "HTTP " + std::to_string(result->status), result->body);
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad response JSON: ") + e.what());
  }
}

ChatResponse HttpBackend::chat(const ChatRequest& req) {
  validate_chat_request(req);
  nlohmann::json msgs = nlohmann::json::array();
  for (const ChatMessage& m : folded_messages(req)) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  }
  nlohmann::json body = {{"model", req.model_id},
                         {"messages", msgs},
                         {"temperature", req.temperature},
                         {"max_tokens", req.max_tokens}};
  if (req.want_logprobs) body["logprobs"] = true;

  nlohmann::json resp = post_json("/chat/completions", body);
  ChatResponse out;
  try {
    const auto& choice = resp.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    out.finish_reason = choice.value("finish_reason", "stop");
    if (resp.contains("usage")) {
      out.usage.prompt_tokens = resp["usage"].value("prompt_tokens", int64_t{0});
      out.usage.completion_tokens = resp["usage"].value("completion_tokens", int64_t{0});
    }
    if (choice.contains("logprobs") && !choice["logprobs"].is_null() &&
        choice["logprobs"].contains("content")) {
      std::vector<TokenLogprob> tls;
      for (const auto& e : choice["logprobs"]["content"]) {
        tls.push_back({e.at("token").get<std::string>(), e.at("logprob").get<double>()});
      }
      out.token_logprobs = std::move(tls);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("unexpected response shape: ") + e.what());
  }
  if (req.want_logprobs && !out.token_logprobs) {
    throw Error(ErrorCode::capability, "endpoint returned no logprobs", req.model_id);
  }
  return out;
}

TokenTrace HttpBackend::score_text(const std::string& model_id, const std::string& prefix,
                                   const std::string& continuation) {
  if (continuation.empty()) {
    throw Error(ErrorCode::parameter, "empty scoring range");
  }
  nlohmann::json body = {{"model", model_id},       {"prompt", prefix + continuation},
                         {"max_tokens", 0},         {"echo", true},
                         {"logprobs", 0},           {"temperature", 0.0}};
  nlohmann::json resp = post_json("/completions", body);
  TokenTrace t;
  t.model_id = model_id;
  try {
    const auto& choice = resp.at("choices").at(0);
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
      throw Error(ErrorCode::capability, "endpoint cannot echo prompt logprobs", model_id);
    }
    const auto& lp = choice["logprobs"];
    t.tokens = lp.at("tokens").get<std::vector<std::string>>();
    const auto& raw = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    t.logprobs.reserve(raw.size());
    for (const auto& v : raw) {
      // The first prompt token arrives as null (no conditioning context).
      double x = v.is_null() ? 0.0 : v.get<double>();
      t.logprobs.push_back(std::min(x, 0.0));
    }
    t.answer_start = t.tokens.size();
    for (size_t i = 0; i < offsets.size(); ++i) {
      if (offsets[i].get<size_t>() >= prefix.size()) {
        t.answer_start = i;
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("unexpected response shape: ") + e.what());
  }
  if (t.answer_start >= t.tokens.size()) {
    throw Error(ErrorCode::domain, "empty scoring range");
  }
  return t;
}

// ---------------------------------------------------------------- MockBackend

void MockBackend::add_response(const ChatRequest& req, ChatResponse resp) {
  add_response(request_fingerprint(req), std::move(resp));
}

void MockBackend::add_response(const std::string& fingerprint, ChatResponse resp) {
  std::lock_guard<std::mutex> lock(mu_);
  tape_[fingerprint].push_back(std::move(resp));
}

void MockBackend::add_score(const std::string& model_id, const std::string& prefix,
                            const std::string& continuation, TokenTrace trace) {
  std::lock_guard<std::mutex> lock(mu_);
  score_tape_[score_fingerprint(model_id, prefix, continuation)] = std::move(trace);
}

void MockBackend::load_tape(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open tape file", path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad tape JSON: ") + e.what(), where);
    }
    try {
      if (j.contains("fingerprint")) {
        add_response(j["fingerprint"].get<std::string>(),
                     response_from_json(j.at("response")));
      } else if (j.contains("request")) {
        const auto& r = j["request"];
        ChatRequest req;
        req.model_id = r.at("model_id").get<std::string>();
        req.temperature = r.value("temperature", 0.0);
        if (r.contains("system_prompt")) {
          req.system_prompt = r["system_prompt"].get<std::string>();
        }
        for (const auto& m : r.at("messages")) {
          req.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                                  m.at("text").get<std::string>()});
        }
        add_response(req, response_from_json(j.at("response")));
      } else if (j.contains("score")) {
        const auto& s = j["score"];
        const auto& tr = j.at("trace");
        TokenTrace t;
        std::string model_id = s.at("model_id").get<std::string>();
        t.model_id = model_id;
        t.tokens = tr.at("tokens").get<std::vector<std::string>>();
        t.logprobs = tr.at("logprobs").get<std::vector<double>>();
        t.answer_start = tr.value("answer_start", size_t{0});
        add_score(model_id, s.at("prefix").get<std::string>(),
                  s.at("continuation").get<std::string>(), std::move(t));
      } else {
        throw Error(ErrorCode::parse, "tape line has none of fingerprint/request/score",
                    where);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad tape record: ") + e.what(), where);
    }
  }
}

ChatResponse MockBackend::chat(const ChatRequest& req) {
  validate_chat_request(req);
  std::string fp = request_fingerprint(req);
  std::unique_lock<std::mutex> lock(mu_);
  chat_log_.push_back(req);
  if (transient_remaining_ < 0) transient_remaining_ = options_.fail_transient_first;
  if (transient_remaining_ > 0) {
    --transient_remaining_;
    lock.unlock();
    throw TransientError("scripted transient failure", fp);
  }
  int delay = options_.delay_ms;
  ChatResponse out;
  auto it = tape_.find(fp);
  if (it != tape_.end() && !it->second.empty()) {
    out = it->second.front();
    if (it->second.size() > 1) it->second.pop_front();  // final entry repeats
  } else if (options_.strict) {
    lock.unlock();
    throw Error(ErrorCode::parse, "no tape entry for request fingerprint", fp);
  } else {
    out.text = options_.default_text;
  }
  lock.unlock();
  if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
  return out;
}

namespace {

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) { out.push_back(cur); cur.clear(); }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TokenTrace MockBackend::score_text(const std::string& model_id, const std::string& prefix,
                                   const std::string& continuation) {
  if (continuation.empty()) {
    throw Error(ErrorCode::parameter, "empty scoring range");
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = score_tape_.find(score_fingerprint(model_id, prefix, continuation));
    if (it != score_tape_.end()) return it->second;
  }
  TokenTrace t;
  t.model_id = model_id;
  std::vector<std::string> pre = whitespace_tokens(prefix);
  std::vector<std::string> cont = whitespace_tokens(continuation);
  if (cont.empty()) {
    throw Error(ErrorCode::domain, "empty scoring range");
  }
  t.tokens = pre;
  t.tokens.insert(t.tokens.end(), cont.begin(), cont.end());
  t.logprobs.assign(t.tokens.size(), options_.fixed_logprob);
  t.answer_start = pre.size();
  if (options_.delay_ms > 0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(options_.delay_ms));
  }
  return t;
}

std::vector<ChatRequest> MockBackend::chat_log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return chat_log_;
}

// ------------------------------------------------------------------ LlmClient

LlmClient::LlmClient(std::shared_ptr<LlmBackend> backend, LlmClientConfig config)
    : backend_(std::move(backend)), config_(config), jitter_state_(config.jitter_seed) {
  if (!backend_) throw Error(ErrorCode::config, "client needs a backend");
  if (config_.max_attempts < 1) {
    throw Error(ErrorCode::config, "max_attempts must be >= 1");
  }
  if (config_.max_inflight < 1) {
    throw Error(ErrorCode::config, "max_inflight must be >= 1");
  }
  if (!config_.cache_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config_.cache_dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create cache dir", config_.cache_dir);
  }
}

// RAII guard for the in-flight cap; blocked callers queue on the condvar.
class LlmClient::InflightSlot {
 public:
  explicit InflightSlot(LlmClient& c) : client_(c) {
    std::unique_lock<std::mutex> lock(client_.inflight_mu_);
    client_.inflight_cv_.wait(lock, [&] { return client_.inflight_ < client_.config_.max_inflight; });
    ++client_.inflight_;
  }
  ~InflightSlot() {
    {
      std::lock_guard<std::mutex> lock(client_.inflight_mu_);
      --client_.inflight_;
    }
    client_.inflight_cv_.notify_one();
  }

 private:
  LlmClient& client_;
};

void LlmClient::acquire_rate_token() {
  if (config_.requests_per_minute <= 0.0) return;
  const double per_second = config_.requests_per_minute / 60.0;
  for (;;) {
    double wait_s = 0.0;
    {
      std::lock_guard<std::mutex> lock(bucket_mu_);
      auto now = std::chrono::steady_clock::now();
      if (!bucket_init_) {
        bucket_init_ = true;
        bucket_last_ = now;
        bucket_allowance_ = config_.requests_per_minute;  // full burst at start
      }
      double elapsed = std::chrono::duration<double>(now - bucket_last_).count();
      bucket_last_ = now;
      bucket_allowance_ = std::min(bucket_allowance_ + elapsed * per_second,
                                   config_.requests_per_minute);
      if (bucket_allowance_ >= 1.0) {
        bucket_allowance_ -= 1.0;
        return;
      }
      wait_s = (1.0 - bucket_allowance_) / per_second;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

template <typename Fn>
auto LlmClient::with_policies(Fn&& call) -> decltype(call()) {
  for (int attempt = 1;; ++attempt) {
    try {
      acquire_rate_token();
      InflightSlot slot(*this);
      network_calls_.fetch_add(1);
      return call();
    } catch (const TransientError& e) {
      if (attempt >= config_.max_attempts) {
        throw Error(ErrorCode::exhausted_retries,
                    "gave up after " + std::to_string(attempt) +
                        " attempts: " + e.what(),
                    e.context());
      }
      double backoff = config_.backoff_base_ms * std::pow(2.0, attempt - 1);
      backoff = std::min(backoff, config_.backoff_max_ms);
      double jitter;
      {
        std::lock_guard<std::mutex> lock(jitter_mu_);
        jitter_state_ = splitmix64(jitter_state_);
        jitter = static_cast<double>(jitter_state_ % 1000) / 1000.0;
      }
      double sleep_ms = backoff * (0.5 + 0.5 * jitter);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(sleep_ms));
    }
  }
}

ChatResponse LlmClient::chat(const ChatRequest& req) {
  validate_chat_request(req);
  const bool cacheable = req.temperature == 0.0 && !config_.cache_dir.empty();
  std::filesystem::path entry;
  if (cacheable) {
    entry = std::filesystem::path(config_.cache_dir) / (cache_key(req) + ".json");
    std::ifstream in(entry);
    if (in) {
      try {
        nlohmann::json j = nlohmann::json::parse(in);
        ChatResponse cached = response_from_json(j);
        cache_hits_.fetch_add(1);
        return cached;
      } catch (...) {
        // Corrupt entry: fall through and refetch.
      }
    }
  }
  ChatResponse resp = with_policies([&] { return backend_->chat(req); });
  if (req.want_logprobs && !resp.token_logprobs) {
    throw Error(ErrorCode::capability, "backend returned no logprobs", req.model_id);
  }
  if (cacheable) {
    std::filesystem::path tmp = entry;
    tmp += ".tmp." + std::to_string(
        std::hash<std::thread::id>{}(std::this_thread::get_id()) & 0xffff);
    {
      std::ofstream out(tmp, std::ios::binary);
      out << response_to_json(resp).dump() << '\n';
    }
    std::error_code ec;
    std::filesystem::rename(tmp, entry, ec);  // atomic publish; last writer wins
  }
  return resp;
}

TokenTrace LlmClient::score_text(const std::string& model_id, const std::string& prefix,
                                 const std::string& continuation) {
  return with_policies([&] { return backend_->score_text(model_id, prefix, continuation); });
}

void parallel_for(size_t count, int workers, const std::function<void(size_t)>& fn) {
  if (count == 0) return;
  int n = std::max(1, workers);
  if (static_cast<size_t>(n) > count) n = static_cast<int>(count);
  if (n == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  size_t err_index = count;
  std::exception_ptr err;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(n));
  for (int w = 0; w < n; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (i < err_index) {
            err_index = i;
            err = std::current_exception();
          }
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace contamkit
