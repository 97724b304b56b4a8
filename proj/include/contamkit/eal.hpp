#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/corpus.hpp"
#include "contamkit/llmclient.hpp"
#include "contamkit/profile.hpp"

namespace contamkit {

// Per-benchmark rephrasing prompt pack. File sections: SYSTEM, FOLLOWUP,
// USER_TEMPLATE (must contain {{question}} and {{answer}}), optional
// QUESTION_MARKER / ANSWER_MARKER / BENCHMARK_ID overrides.
struct RephraseProfile {
  std::string benchmark_id;
  std::string system_prompt;
  std::string followup_user_prompt;
  std::string user_template;
  std::string question_marker = "New Question:";
  std::string answer_marker = "New Answer:";
};

RephraseProfile load_rephrase_profile(const std::string& path);

// The user message for one sample: template placeholders filled with the
// question and the gold answer only — choice lists never enter the prompt,
// so wrong options stay out of the rephraser's view by construction.
std::string render_rephrase_user_prompt(const RephraseProfile& profile, const Sample& s);

// Reply parse: new question is the text between the LAST question marker
// and the following answer marker; new answer runs from there to the end.
// Both trimmed. nullopt when either marker is missing or a field is empty.
std::optional<std::pair<std::string, std::string>> parse_rephrase_reply(
    const std::string& reply, const RephraseProfile& profile);

struct RephraseOutcome {
  bool parsed = false;
  std::string question;
  std::string answer;
  std::string raw_reply;
};

// Single-shot white-box rephrase (one request, one parse attempt plus one
// retry of the identical request on parse failure).
RephraseOutcome rephrase_once(const Sample& sample, const RephraseProfile& profile,
                              LlmClient& client, const std::string& model_id,
                              int max_tokens = 1024);

// The rephrased counterpart of a source sample: question/answer replaced;
// for multiple-choice sources the gold slot of the otherwise-untouched
// option list is spliced with the new answer. benchmark_id and source tags
// are dropped (the evasive actor ships clean records); variant is tagged.
Sample make_rephrased_sample(const Sample& source, const std::string& question,
                             const std::string& answer);

// Detector hook for hardening: true = still flagged as contaminated.
struct Detector {
  std::string method_id;
  std::function<bool(const Sample& candidate)> flagged;
};

enum class RephraseStatus { accepted, dropped_detected, dropped_parse_failure };
std::string to_string(RephraseStatus s);

struct RephraseIteration {
  std::string question;
  std::string answer;
  std::string raw_reply;
};

struct RephraseRecord {
  std::string source_sample_id;
  std::vector<RephraseIteration> iterations;
  RephraseStatus final_status = RephraseStatus::dropped_parse_failure;
  // Detector ids that did not flag the final accepted iteration.
  std::vector<std::string> detectors_evaded;
  // Full running conversation (audit trail): the followup prompt is
  // appended to the same conversation each round, never a fresh one.
  std::vector<ChatMessage> conversation;
};

nlohmann::json rephrase_record_to_json(const RephraseRecord& r);

// Iterative oracle-access hardening: rephrase, test against every detector,
// and keep appending the followup to the running conversation until no
// detector flags the candidate or max_iters is spent. Stops early on
// acceptance; parse failure (after the one retry) drops the sample.
RephraseRecord oracle_harden(const Sample& sample, const RephraseProfile& profile,
                             LlmClient& client, const std::string& model_id,
                             const std::vector<Detector>& detectors, int max_iters = 3,
                             int max_tokens = 1024);

// Accepted records only, materialized via make_rephrased_sample against the
// source benchmark (needed for the multiple-choice gold-slot splice).
std::vector<Sample> filter_flagged(const std::vector<RephraseRecord>& records,
                                   const Benchmark& source);

enum class MixtureMode { open, evasive };
std::string to_string(MixtureMode m);
MixtureMode mixture_mode_from_string(std::string_view s);

struct MixturePlan {
  std::string benchmark_id;
  MixtureMode mode = MixtureMode::open;
  double fraction = 0.5;     // of benchmark samples, ceil
  int repeats = 1;           // occurrences per contaminated sample (1 or 5 in practice)
  uint64_t total_size = 25000;
  uint64_t seed = 0;
};

// Throws unless 0 < fraction <= 1, repeats >= 1 and
// ceil(fraction * |benchmark|) * repeats <= total_size.
void validate_plan(const MixturePlan& plan, size_t benchmark_size);

struct MixtureManifest {
  MixturePlan plan;
  std::vector<std::string> selected_ids;  // sorted
  std::vector<std::string> dropped_ids;   // selected but hardened away
  uint64_t contaminated_entries = 0;
  uint64_t background_entries = 0;
  std::string background_source;
};

nlohmann::json manifest_to_json(const MixtureManifest& m);
MixtureManifest load_manifest(const std::string& path);
void save_manifest(const MixtureManifest& m, const std::string& path);

struct MixtureResult {
  // Entries reuse the canonical sample schema: answer holds the fully
  // Alpaca-formatted text, tags carry origin/source_id/repeat_index.
  std::vector<Sample> entries;
  MixtureManifest manifest;
};

// Deterministic mixture assembly. One seeded generator consumed in a fixed
// order — benchmark selection, background fill, final shuffle — so open
// and evasive runs with equal seeds select the same benchmark ids.
// `contaminant` maps a selected id to the text that actually enters the
// mixture: the benchmark samples themselves (open) or their rephrased
// counterparts (evasive); selected ids missing from it are recorded as
// dropped and replaced by background padding.
MixtureResult build_mixture(const MixturePlan& plan, const Benchmark& benchmark,
                            const std::vector<Sample>& contaminant,
                            const Corpus& background);

}  // namespace contamkit
