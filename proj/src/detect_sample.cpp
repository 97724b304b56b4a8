#include "contamkit/detect_sample.hpp"

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "contamkit/error.hpp"
#include "contamkit/textmetrics.hpp"

namespace contamkit {

std::string to_string(AccessLevel a) {
  switch (a) {
    case AccessLevel::black: return "black";
    case AccessLevel::grey: return "grey";
    case AccessLevel::white: return "white";
    case AccessLevel::oracle: return "oracle";
  }
  return "unknown";
}

std::string to_string(MethodLevel l) {
  return l == MethodLevel::sample ? "sample" : "benchmark";
}

const std::vector<MethodDescriptor>& method_registry() {
  // level, access, needs_metadata, needs_reference, threshold_based,
  // assumes_verbatim
  static const std::vector<MethodDescriptor> registry = {
      {"yeom", MethodLevel::sample, AccessLevel::grey, false, false, true, true},
      {"min_k", MethodLevel::sample, AccessLevel::grey, false, false, true, false},
      {"lowercase", MethodLevel::sample, AccessLevel::grey, false, false, true, true},
      {"reference", MethodLevel::sample, AccessLevel::grey, false, true, false, true},
      {"blackbox_rouge", MethodLevel::sample, AccessLevel::black, false, false, true, true},
      {"dpcc", MethodLevel::benchmark, AccessLevel::grey, false, false, true, true},
      {"cleaneval", MethodLevel::benchmark, AccessLevel::black, false, false, false, true},
      {"ngram", MethodLevel::sample, AccessLevel::oracle, false, false, false, true},
      {"llm_decontaminator", MethodLevel::sample, AccessLevel::oracle, false, false, false, false},
  };
  return registry;
}

const MethodDescriptor* find_method(std::string_view method_id) {
  for (const MethodDescriptor& d : method_registry()) {
    if (d.method_id == method_id) return &d;
  }
  return nullptr;
}

Score score_yeom(const TokenTrace& trace, Scope scope) {
  return {"yeom", trace.sample_id, -mean_nll(trace, scope)};
}

Score score_min_k(const TokenTrace& trace, double k_percent, Scope scope) {
  return {"min_k", trace.sample_id, min_k_mean_logprob(trace, k_percent, scope)};
}

namespace {

void require_pair(const TokenTrace& a, const TokenTrace& b, bool same_model,
                  const char* what) {
  if (a.sample_id != b.sample_id) {
    throw Error(ErrorCode::pairing,
                std::string(what) + ": sample ids differ (" + a.sample_id + " vs " +
                    b.sample_id + ")");
  }
  if (same_model && a.model_id != b.model_id) {
    throw Error(ErrorCode::pairing,
                std::string(what) + ": model ids differ (" + a.model_id + " vs " +
                    b.model_id + ")",
                a.sample_id);
  }
  if (!same_model && a.model_id == b.model_id) {
    throw Error(ErrorCode::pairing,
                std::string(what) + ": reference model must differ from target (" +
                    a.model_id + ")",
                a.sample_id);
  }
}

}  // namespace

Score score_lowercase(const TokenTrace& original, const TokenTrace& lowercase,
                      Scope scope) {
  require_pair(original, lowercase, /*same_model=*/true, "lowercase pair");
  if (original.variant != "original" || lowercase.variant != "lowercase") {
    throw Error(ErrorCode::pairing,
                "lowercase pair needs variants original/lowercase, got (" +
                    original.variant + ", " + lowercase.variant + ")",
                original.sample_id);
  }
  return {"lowercase", original.sample_id,
          mean_nll(lowercase, scope) - mean_nll(original, scope)};
}

Score score_reference(const TokenTrace& target, const TokenTrace& reference,
                      Scope scope) {
  require_pair(target, reference, /*same_model=*/false, "reference pair");
  if (target.variant != reference.variant) {
    throw Error(ErrorCode::pairing,
                "reference pair needs matching variants, got (" + target.variant +
                    ", " + reference.variant + ")",
                target.sample_id);
  }
  return {"reference", target.sample_id,
          mean_nll(reference, scope) - mean_nll(target, scope)};
}

Score score_blackbox_rouge(std::string_view generation, const Sample& sample) {
  return {"blackbox_rouge", sample.id, rouge_l(generation, sample.answer)};
}

std::vector<Score> load_scores_jsonl(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw Error(ErrorCode::io, "cannot open scores file", path);
    in = &file;
  }
  std::vector<Score> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(*in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      out.push_back({j.at("method_id").get<std::string>(),
                     j.at("sample_id").get<std::string>(),
                     j.at("value").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad score record: ") + e.what(), where);
    }
  }
  return out;
}

void save_scores_jsonl(const std::vector<Score>& scores, const std::string& path) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (path != "-") {
    file.open(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open scores file for writing", path);
    out = &file;
  }
  for (const Score& s : scores) {
    nlohmann::json j = {{"method_id", s.method_id},
                        {"sample_id", s.sample_id},
                        {"value", s.value}};
    *out << j.dump() << '\n';
  }
  if (!*out) throw Error(ErrorCode::io, "write failed", path);
}

}  // namespace contamkit
