#include "contamkit/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "contamkit/error.hpp"

namespace contamkit {

void validate_trace(const TokenTrace& t) {
  if (t.tokens.empty()) {
    throw Error(ErrorCode::invariant, "trace has no tokens", t.sample_id);
  }
  if (t.tokens.size() != t.logprobs.size()) {
    throw Error(ErrorCode::invariant,
                "tokens/logprobs length mismatch: " + std::to_string(t.tokens.size()) +
                    " vs " + std::to_string(t.logprobs.size()),
                t.sample_id);
  }
  if (t.answer_start >= t.tokens.size()) {
    throw Error(ErrorCode::invariant,
                "answer_start " + std::to_string(t.answer_start) +
                    " out of range for " + std::to_string(t.tokens.size()) + " tokens",
                t.sample_id);
  }
  for (double lp : t.logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw Error(ErrorCode::invariant, "logprob not a finite value <= 0", t.sample_id);
    }
  }
  if (t.variant.empty()) {
    throw Error(ErrorCode::invariant, "trace variant is empty", t.sample_id);
  }
}

Scope scope_from_string(std::string_view s) {
  if (s == "answer_only") return Scope::answer_only;
  if (s == "full") return Scope::full;
  throw Error(ErrorCode::parameter,
              "unknown scope '" + std::string(s) + "' (expected answer_only or full)");
}

std::string to_string(Scope scope) {
  return scope == Scope::answer_only ? "answer_only" : "full";
}

namespace {

// [begin, end) of the scored token range.
std::pair<size_t, size_t> scoped_range(const TokenTrace& t, Scope scope) {
  size_t begin = scope == Scope::answer_only ? t.answer_start : 0;
  size_t end = t.logprobs.size();
  if (begin >= end) {
    throw Error(ErrorCode::domain, "empty scoring range", t.sample_id);
  }
  return {begin, end};
}

}  // namespace

double mean_nll(const TokenTrace& t, Scope scope) {
  auto [begin, end] = scoped_range(t, scope);
  double sum = 0.0;
  for (size_t i = begin; i < end; ++i) sum += t.logprobs[i];
  return -sum / static_cast<double>(end - begin);
}

double perplexity(const TokenTrace& t, Scope scope) {
  return std::exp(mean_nll(t, scope));
}

double min_k_mean_logprob(const TokenTrace& t, double k_percent, Scope scope) {
  if (!(k_percent > 0.0) || k_percent > 100.0) {
    throw Error(ErrorCode::parameter,
                "k_percent must lie in (0, 100], got " + std::to_string(k_percent));
  }
  auto [begin, end] = scoped_range(t, scope);
  std::vector<double> scoped(t.logprobs.begin() + static_cast<ptrdiff_t>(begin),
                             t.logprobs.begin() + static_cast<ptrdiff_t>(end));
  size_t n = scoped.size();
  size_t m = static_cast<size_t>(std::ceil(k_percent / 100.0 * static_cast<double>(n)));
  if (m == 0) m = 1;
  if (m > n) m = n;
  std::partial_sort(scoped.begin(), scoped.begin() + static_cast<ptrdiff_t>(m),
                    scoped.end());
  double sum = 0.0;
  for (size_t i = 0; i < m; ++i) sum += scoped[i];
  return sum / static_cast<double>(m);
}

void TraceStore::insert(TokenTrace t) {
  validate_trace(t);
  TraceKey key{t.sample_id, t.variant, t.model_id};
  auto [it, inserted] = traces_.emplace(std::move(key), std::move(t));
  if (!inserted) {
    throw Error(ErrorCode::invariant,
                "duplicate trace key (" + it->first.sample_id + ", " +
                    it->first.variant + ", " + it->first.model_id + ")",
                it->first.sample_id);
  }
}

const TokenTrace* TraceStore::find(std::string_view sample_id, std::string_view variant,
                                   std::string_view model_id) const {
  auto it = traces_.find(TraceKey{std::string(sample_id), std::string(variant),
                                  std::string(model_id)});
  return it == traces_.end() ? nullptr : &it->second;
}

std::vector<const TokenTrace*> TraceStore::find_prefix(std::string_view sample_id,
                                                       std::string_view variant_prefix,
                                                       std::string_view model_id) const {
  std::vector<const TokenTrace*> out;
  auto it = traces_.lower_bound(
      TraceKey{std::string(sample_id), std::string(variant_prefix), ""});
  for (; it != traces_.end(); ++it) {
    if (it->first.sample_id != sample_id) break;
    if (it->first.variant.compare(0, variant_prefix.size(), variant_prefix) != 0) break;
    if (it->first.model_id == model_id) out.push_back(&it->second);
  }
  return out;
}

std::vector<std::string> TraceStore::model_ids() const {
  std::vector<std::string> out;
  for (const auto& [key, trace] : traces_) {
    if (std::find(out.begin(), out.end(), key.model_id) == out.end()) {
      out.push_back(key.model_id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string trace_to_json_line(const TokenTrace& t) {
  nlohmann::json j;
  j["sample_id"] = t.sample_id;
  j["variant"] = t.variant;
  j["model_id"] = t.model_id;
  j["tokens"] = t.tokens;
  j["logprobs"] = t.logprobs;
  j["answer_start"] = t.answer_start;
  return j.dump();
}

TraceStore load_traces(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw Error(ErrorCode::io, "cannot open file", path);
    in = &file;
  }
  TraceStore store;
  std::string line;
  size_t lineno = 0;
  while (std::getline(*in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad JSON: ") + e.what(), where);
    }
    TokenTrace t;
    try {
      t.sample_id = j.at("sample_id").get<std::string>();
      t.variant = j.at("variant").get<std::string>();
      t.model_id = j.at("model_id").get<std::string>();
      t.tokens = j.at("tokens").get<std::vector<std::string>>();
      t.logprobs = j.at("logprobs").get<std::vector<double>>();
      t.answer_start = j.at("answer_start").get<size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad trace record: ") + e.what(), where);
    }
    try {
      store.insert(std::move(t));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), where);
    }
  }
  return store;
}

void save_traces(const TraceStore& store, const std::string& path) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (path != "-") {
    file.open(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", path);
    out = &file;
  }
  for (const auto& [key, trace] : store.all()) {
    *out << trace_to_json_line(trace) << '\n';
  }
  if (!*out) throw Error(ErrorCode::io, "write failed", path);
}

}  // namespace contamkit
