#include "cli_support.hpp"

#include <fstream>
#include <iostream>

namespace contamkit::cli {

void CommonFlags::attach_config(CLI::App& cmd) {
  cmd.add_option("--config", config_path_,
                 "Key=value config file (flags > env > file > defaults)");
}

void CommonFlags::attach_models(CLI::App& cmd) {
  o_target_model_ = cmd.add_option("--model", target_model_, "Target model id");
  o_reference_model_ =
      cmd.add_option("--reference-model", reference_model_, "Reference model id");
  o_rephraser_model_ =
      cmd.add_option("--rephraser-model", rephraser_model_, "Rephraser model id");
}

void CommonFlags::attach_endpoint(CLI::App& cmd) {
  attach_models(cmd);
  o_base_url_ = cmd.add_option("--base-url", base_url_,
                               "OpenAI-compatible endpoint root, e.g. https://host/v1");
  o_api_key_ = cmd.add_option("--api-key", api_key_,
                              "Bearer token (prefer the CONTAMKIT_API_KEY env var)");
  o_cache_dir_ = cmd.add_option("--cache-dir", cache_dir_,
                                "Response cache directory (empty disables caching)");
  o_tape_path_ = cmd.add_option("--tape", tape_path_,
                                "Replay tape (JSONL); selects the offline mock backend");
  o_max_attempts_ =
      cmd.add_option("--max-attempts", max_attempts_, "Retry budget per request");
  o_max_inflight_ =
      cmd.add_option("--max-inflight", max_inflight_, "Concurrent request cap");
  o_rpm_ = cmd.add_option("--rpm", rpm_, "Requests-per-minute cap (0 = unlimited)");
  o_max_tokens_ =
      cmd.add_option("--max-tokens", max_tokens_, "Completion token cap per request");
}

void CommonFlags::attach_workers(CLI::App& cmd) {
  o_workers_ = cmd.add_option("--workers", workers_, "Worker threads");
}

void CommonFlags::attach_scope(CLI::App& cmd) {
  o_scope_ = cmd.add_option("--scope", scope_, "Scoring span: answer_only or full");
}

void CommonFlags::attach_seed(CLI::App& cmd) {
  o_seed_ = cmd.add_option("--seed", seed_, "Deterministic RNG seed");
}

Config CommonFlags::resolve() const {
  Config cfg;
  if (!config_path_.empty()) apply_config_file(cfg, config_path_);
  apply_environment(cfg);

  auto passed = [](const CLI::Option* o) { return o != nullptr && o->count() > 0; };
  if (passed(o_base_url_)) cfg.base_url = base_url_;
  if (passed(o_api_key_)) cfg.api_key = api_key_;
  if (passed(o_target_model_)) cfg.target_model = target_model_;
  if (passed(o_reference_model_)) cfg.reference_model = reference_model_;
  if (passed(o_rephraser_model_)) cfg.rephraser_model = rephraser_model_;
  if (passed(o_cache_dir_)) cfg.cache_dir = cache_dir_;
  if (passed(o_tape_path_)) cfg.tape_path = tape_path_;
  if (passed(o_max_attempts_)) cfg.max_attempts = max_attempts_;
  if (passed(o_max_inflight_)) cfg.max_inflight = max_inflight_;
  if (passed(o_rpm_)) cfg.requests_per_minute = rpm_;
  if (passed(o_max_tokens_)) cfg.max_tokens = max_tokens_;
  if (passed(o_workers_)) cfg.workers = workers_;
  if (passed(o_scope_)) cfg.scope = scope_;
  if (passed(o_seed_)) cfg.seed = seed_;

  validate_config(cfg);
  return cfg;
}

LlmClient make_client(const Config& cfg) {
  std::shared_ptr<LlmBackend> backend;
  if (!cfg.tape_path.empty()) {
    auto mock = std::make_shared<MockBackend>();
    mock->load_tape(cfg.tape_path);
    backend = std::move(mock);
  } else {
    if (cfg.base_url.empty()) {
      throw Error(ErrorCode::config, "no endpoint configured: set base_url or tape_path");
    }
    backend = std::make_shared<HttpBackend>(HttpBackendConfig{cfg.base_url, cfg.api_key});
  }
  LlmClientConfig cc;
  cc.max_attempts = cfg.max_attempts;
  cc.max_inflight = cfg.max_inflight;
  cc.requests_per_minute = cfg.requests_per_minute;
  cc.cache_dir = cfg.cache_dir;
  return LlmClient(std::move(backend), cc);
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw Error(ErrorCode::io, "cannot open file", path);
    in = &file;
  }
  try {
    return nlohmann::json::parse(*in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad JSON: ") + e.what(), path);
  }
}

void write_json_file(const nlohmann::json& j, const std::string& path, int indent) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (path != "-") {
    file.open(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", path);
    out = &file;
  }
  *out << j.dump(indent) << '\n';
  if (!*out) throw Error(ErrorCode::io, "write failed", path);
}

}  // namespace contamkit::cli
