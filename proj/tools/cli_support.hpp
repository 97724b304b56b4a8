#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "contamkit/config.hpp"
#include "contamkit/error.hpp"
#include "contamkit/llmclient.hpp"

namespace contamkit::cli {

// Staged flag values for one subcommand. CLI11 fills the members at parse
// time; resolve() then rebuilds the effective Config with the documented
// precedence flags > environment > config file > defaults, applying a flag
// only when the user actually passed it (option count > 0).
class CommonFlags {
 public:
  // --config (every subcommand).
  void attach_config(CLI::App& cmd);
  // Model-id flags alone (offline subcommands that only select traces).
  void attach_models(CLI::App& cmd);
  // Model ids + transport + client policy (subcommands that talk to a model).
  void attach_endpoint(CLI::App& cmd);
  // --workers (parallel subcommands).
  void attach_workers(CLI::App& cmd);
  // --scope (trace-scoring subcommands).
  void attach_scope(CLI::App& cmd);
  // --seed (seeded subcommands).
  void attach_seed(CLI::App& cmd);

  Config resolve() const;

 private:
  std::string config_path_;

  std::string base_url_;
  std::string api_key_;
  std::string target_model_;
  std::string reference_model_;
  std::string rephraser_model_;
  std::string cache_dir_;
  std::string tape_path_;
  int max_attempts_ = 0;
  int max_inflight_ = 0;
  double rpm_ = 0.0;
  int max_tokens_ = 0;
  int workers_ = 0;
  std::string scope_;
  uint64_t seed_ = 0;

  CLI::Option* o_base_url_ = nullptr;
  CLI::Option* o_api_key_ = nullptr;
  CLI::Option* o_target_model_ = nullptr;
  CLI::Option* o_reference_model_ = nullptr;
  CLI::Option* o_rephraser_model_ = nullptr;
  CLI::Option* o_cache_dir_ = nullptr;
  CLI::Option* o_tape_path_ = nullptr;
  CLI::Option* o_max_attempts_ = nullptr;
  CLI::Option* o_max_inflight_ = nullptr;
  CLI::Option* o_rpm_ = nullptr;
  CLI::Option* o_max_tokens_ = nullptr;
  CLI::Option* o_workers_ = nullptr;
  CLI::Option* o_scope_ = nullptr;
  CLI::Option* o_seed_ = nullptr;
};

// Backend selection: tape_path -> deterministic mock replay, otherwise
// HTTP against base_url (required). Client policies come from the config.
LlmClient make_client(const Config& cfg);

// Whole-file JSON helpers; "-" is stdin/stdout. Writes end with a newline.
nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path, int indent = 2);

// Subcommand registration, split by theme to keep files reviewable.
void register_data_commands(CLI::App& app);
void register_detect_commands(CLI::App& app);
void register_eal_commands(CLI::App& app);

}  // namespace contamkit::cli
