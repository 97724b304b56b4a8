#pragma once

#include <cstdint>
#include <string>

namespace contamkit {

// Runtime configuration with strict precedence: command-line flags beat
// environment variables beat the config file beat these defaults. The file
// is plain key=value with '#' comments; unknown keys are an error (typo
// protection). CONTAMKIT_API_KEY / CONTAMKIT_BASE_URL are the environment
// overrides, so secrets can stay out of files and argv.
struct Config {
  // Endpoint + models.
  std::string base_url;
  std::string api_key;
  std::string target_model;
  std::string reference_model;
  std::string rephraser_model;

  // Client policy.
  std::string cache_dir;
  int max_attempts = 5;
  int max_inflight = 4;
  double requests_per_minute = 0.0;  // 0 = unlimited
  int workers = 4;
  int max_tokens = 1024;

  // Detector parameters.
  double k_percent = 20.0;
  uint32_t ngram_n = 8;
  double dpcc_threshold = 0.85;
  int dpcc_m = 10;
  std::string scope = "answer_only";

  // Mixture defaults.
  double fraction = 0.5;
  int repeats = 1;
  uint64_t total_size = 25000;
  uint64_t seed = 0;

  // Prompt profile paths.
  std::string rephrase_profile;
  std::string cleaneval_profile;
  std::string perturb_profile;
  std::string decontaminator_profile;

  // Offline transport: replay tape path (mock backend when set).
  std::string tape_path;
};

// Parse a config file into `config` (later call sites apply env + flags on
// top). Throws Error(config) on unknown keys or unparseable values.
void apply_config_file(Config& config, const std::string& path);
// CONTAMKIT_API_KEY and CONTAMKIT_BASE_URL.
void apply_environment(Config& config);
// Range checks shared by every subcommand.
void validate_config(const Config& config);

}  // namespace contamkit
