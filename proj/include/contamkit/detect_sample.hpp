#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "contamkit/corpus.hpp"
#include "contamkit/trace.hpp"

namespace contamkit {

// One detector output. All methods share a single orientation: higher
// value means more likely contaminated, so ROC sweeps need no per-method
// flipping. JSONL fields are fixed: method_id, sample_id, value.
struct Score {
  std::string method_id;
  std::string sample_id;
  double value = 0.0;

  bool operator==(const Score&) const = default;
};

inline constexpr std::string_view kScoreOrientation = "higher_is_contaminated";

enum class AccessLevel { black, grey, white, oracle };
enum class MethodLevel { sample, benchmark };
std::string to_string(AccessLevel a);
std::string to_string(MethodLevel l);

// Capability/assumption descriptor attached to every detector.
struct MethodDescriptor {
  std::string method_id;
  MethodLevel level = MethodLevel::sample;
  AccessLevel access = AccessLevel::grey;
  bool needs_metadata = false;    // requires benchmark identity/labels
  bool needs_reference = false;   // requires a second reference model
  bool threshold_based = false;   // decision needs a tuned cutoff
  bool assumes_verbatim = true;   // defeated by rephrasing when true
};

const std::vector<MethodDescriptor>& method_registry();
// nullptr when the id is unknown.
const MethodDescriptor* find_method(std::string_view method_id);

// Negated mean NLL of the scoped tokens: likelier (memorized) text scores
// higher.
Score score_yeom(const TokenTrace& trace, Scope scope = Scope::answer_only);

// Mean logprob of the m = ceil(k/100 * n) least likely scoped tokens.
Score score_min_k(const TokenTrace& trace, double k_percent = 20.0,
                  Scope scope = Scope::answer_only);

// mean_nll(lowercased variant) - mean_nll(original): memorization is
// case-sensitive, so a large gap marks contamination. Requires the pair to
// share sample_id and model_id with variants original/lowercase.
Score score_lowercase(const TokenTrace& original, const TokenTrace& lowercase,
                      Scope scope = Scope::answer_only);

// mean_nll(reference model) - mean_nll(target model) on identical text.
// Requires equal sample_id and variant but distinct model_ids.
Score score_reference(const TokenTrace& target, const TokenTrace& reference,
                      Scope scope = Scope::answer_only);

// Black-box baseline: ROUGE-L of a model generation against the gold answer.
Score score_blackbox_rouge(std::string_view generation, const Sample& sample);

// Scores JSONL: one {"method_id","sample_id","value"} object per line.
std::vector<Score> load_scores_jsonl(const std::string& path);
void save_scores_jsonl(const std::vector<Score>& scores, const std::string& path);

}  // namespace contamkit
