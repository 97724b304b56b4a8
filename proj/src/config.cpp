#include "contamkit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <type_traits>

#include "contamkit/error.hpp"

namespace contamkit {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    if constexpr (std::is_same_v<T, double>) {
      double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return v;
    } else if constexpr (std::is_same_v<T, uint64_t>) {
      unsigned long long v = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return static_cast<uint64_t>(v);
    } else {
      long v = std::stol(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(value);
      return static_cast<T>(v);
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::config, "bad numeric value '" + value + "' for key " + key);
  }
}

}  // namespace

void apply_config_file(Config& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config, "cannot open config file", path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config, "expected key=value",
                  path + ":" + std::to_string(lineno));
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));

    if (key == "base_url") config.base_url = value;
    else if (key == "api_key") config.api_key = value;
    else if (key == "target_model") config.target_model = value;
    else if (key == "reference_model") config.reference_model = value;
    else if (key == "rephraser_model") config.rephraser_model = value;
    else if (key == "cache_dir") config.cache_dir = value;
    else if (key == "max_attempts") config.max_attempts = parse_number<int>(value, key);
    else if (key == "max_inflight") config.max_inflight = parse_number<int>(value, key);
    else if (key == "requests_per_minute") config.requests_per_minute = parse_number<double>(value, key);
    else if (key == "workers") config.workers = parse_number<int>(value, key);
    else if (key == "max_tokens") config.max_tokens = parse_number<int>(value, key);
    else if (key == "k_percent") config.k_percent = parse_number<double>(value, key);
    else if (key == "ngram_n") config.ngram_n = static_cast<uint32_t>(parse_number<int>(value, key));
    else if (key == "dpcc_threshold") config.dpcc_threshold = parse_number<double>(value, key);
    else if (key == "dpcc_m") config.dpcc_m = parse_number<int>(value, key);
    else if (key == "scope") config.scope = value;
    else if (key == "fraction") config.fraction = parse_number<double>(value, key);
    else if (key == "repeats") config.repeats = parse_number<int>(value, key);
    else if (key == "total_size") config.total_size = parse_number<uint64_t>(value, key);
    else if (key == "seed") config.seed = parse_number<uint64_t>(value, key);
    else if (key == "rephrase_profile") config.rephrase_profile = value;
    else if (key == "cleaneval_profile") config.cleaneval_profile = value;
    else if (key == "perturb_profile") config.perturb_profile = value;
    else if (key == "decontaminator_profile") config.decontaminator_profile = value;
    else if (key == "tape_path") config.tape_path = value;
    else {
      throw Error(ErrorCode::config, "unknown config key '" + key + "'",
                  path + ":" + std::to_string(lineno));
    }
  }
}

void apply_environment(Config& config) {
  if (const char* v = std::getenv("CONTAMKIT_API_KEY")) config.api_key = v;
  if (const char* v = std::getenv("CONTAMKIT_BASE_URL")) config.base_url = v;
}

void validate_config(const Config& config) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::config, msg); };
  if (config.max_attempts < 1) fail("max_attempts must be >= 1");
  if (config.max_inflight < 1) fail("max_inflight must be >= 1");
  if (config.requests_per_minute < 0.0) fail("requests_per_minute must be >= 0");
  if (config.workers < 1) fail("workers must be >= 1");
  if (config.max_tokens < 1) fail("max_tokens must be >= 1");
  if (!(config.k_percent > 0.0) || config.k_percent > 100.0) {
    fail("k_percent must lie in (0, 100]");
  }
  if (config.ngram_n < 1) fail("ngram_n must be >= 1");
  if (!(config.dpcc_threshold >= 0.0) || config.dpcc_threshold > 1.0) {
    fail("dpcc_threshold must lie in [0, 1]");
  }
  if (config.dpcc_m < 1) fail("dpcc_m must be >= 1");
  if (config.scope != "answer_only" && config.scope != "full") {
    fail("scope must be answer_only or full");
  }
  if (!(config.fraction > 0.0) || config.fraction > 1.0) {
    fail("fraction must lie in (0, 1]");
  }
  if (config.repeats < 1) fail("repeats must be >= 1");
  if (config.total_size < 1) fail("total_size must be >= 1");
}

}  // namespace contamkit
