#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace contamkit {

// Per-token log-probability record for one (sample, variant, model) triple.
// Logprobs are natural logs (nats), each <= 0 and finite; tokens and
// logprobs are index-aligned; answer_start marks the first answer token.
// Canonical variants: "original", "lowercase", "perturbed:<i>",
// "rephrased:<i>", "choice:<i>".
struct TokenTrace {
  std::string sample_id;
  std::string variant = "original";
  std::string model_id;
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  size_t answer_start = 0;

  bool operator==(const TokenTrace&) const = default;
};

// Throws Error(invariant) on length mismatch, empty tokens, out-of-range
// answer_start, or a positive/non-finite logprob.
void validate_trace(const TokenTrace& t);

// Scoring span: the answer tokens only (default everywhere) or the full
// prompt+answer sequence.
enum class Scope { answer_only, full };
Scope scope_from_string(std::string_view s);
std::string to_string(Scope scope);

// Mean negative log-likelihood over the scoped tokens, in nats.
double mean_nll(const TokenTrace& t, Scope scope = Scope::answer_only);
// exp(mean_nll); >= 1 for any valid trace.
double perplexity(const TokenTrace& t, Scope scope = Scope::answer_only);
// Mean of the m = ceil(k_percent/100 * n) smallest logprobs in the scope.
// k_percent must lie in (0, 100].
double min_k_mean_logprob(const TokenTrace& t, double k_percent = 20.0,
                          Scope scope = Scope::answer_only);

struct TraceKey {
  std::string sample_id;
  std::string variant;
  std::string model_id;

  auto operator<=>(const TraceKey&) const = default;
};

// Keyed collection; insertion rejects duplicate (sample, variant, model)
// keys, lookups of absent traces return nullptr. Iteration order is the
// sorted key order, so saves are deterministic.
class TraceStore {
 public:
  void insert(TokenTrace t);
  const TokenTrace* find(std::string_view sample_id, std::string_view variant,
                         std::string_view model_id) const;
  // All traces for a sample/model whose variant starts with `variant_prefix`,
  // ordered by variant string.
  std::vector<const TokenTrace*> find_prefix(std::string_view sample_id,
                                             std::string_view variant_prefix,
                                             std::string_view model_id) const;
  std::vector<std::string> model_ids() const;
  const std::map<TraceKey, TokenTrace>& all() const { return traces_; }
  size_t size() const { return traces_.size(); }

 private:
  std::map<TraceKey, TokenTrace> traces_;
};

// JSONL with fixed fields: sample_id, variant, model_id, tokens, logprobs,
// answer_start. Logprobs round-trip bit-exactly (shortest-round-trip reals).
TraceStore load_traces(const std::string& path);
void save_traces(const TraceStore& store, const std::string& path);
std::string trace_to_json_line(const TokenTrace& t);

}  // namespace contamkit
