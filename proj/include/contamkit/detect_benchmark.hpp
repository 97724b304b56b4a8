#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/corpus.hpp"
#include "contamkit/eal.hpp"
#include "contamkit/llmclient.hpp"
#include "contamkit/trace.hpp"

namespace contamkit {

// Fraction of perturbed variants whose perplexity exceeds (strictly) the
// original's. Near 1.0 means the original sits in a sharp likelihood
// dip — the memorization signature. All traces must share sample_id and
// model_id; perturbed variants use the "perturbed:<i>" convention.
double dpcc_sample_ratio(const TokenTrace& original,
                         const std::vector<const TokenTrace*>& perturbed,
                         Scope scope = Scope::answer_only);
double dpcc_sample_ratio(const TokenTrace& original,
                         const std::vector<TokenTrace>& perturbed,
                         Scope scope = Scope::answer_only);

struct DpccReport {
  std::string benchmark_id;
  std::string model_id;
  double threshold = 0.85;
  double benchmark_score = 0.0;  // mean per-sample ratio
  bool flagged = false;          // benchmark_score > threshold (strict)
  int perturbations_per_sample = 0;  // max perturbed-trace count observed
  size_t scored_samples = 0;
  size_t skipped_samples = 0;  // missing original or no perturbed traces
  std::map<std::string, double> per_sample_ratio;
};

nlohmann::json dpcc_report_to_json(const DpccReport& r);

// Aggregates dpcc_sample_ratio over the benchmark (or the subset when
// given). Samples without a usable trace pair are skipped and counted;
// zero scoreable samples is an error.
DpccReport dpcc_benchmark(const Benchmark& benchmark, const TraceStore& traces,
                          const std::string& model_id, Scope scope = Scope::answer_only,
                          double threshold = 0.85,
                          const std::vector<std::string>* subset_ids = nullptr);

// m lightly perturbed (question, answer) variants via the client, one
// request per variant (the {{index}} placeholder keeps temperature-0
// requests distinct). Parse failures are retried once, then skipped and
// counted; all-failed is an error. Output samples keep the source id and
// tag variant=perturbed:<i>.
struct PerturbationResult {
  std::vector<Sample> samples;
  size_t parse_failures = 0;
};

PerturbationResult generate_perturbations(const Sample& sample, int m, LlmClient& client,
                                          const RephraseProfile& profile,
                                          const std::string& model_id,
                                          int max_tokens = 1024);

// Rephrase-and-re-evaluate. File sections: SYSTEM, USER_TEMPLATE (with
// {{question}} and {{answer}}), optional QUESTION_MARKER (default
// "New Question:"). The reply carries only a new question: everything
// after the LAST marker, trimmed.
struct CleanEvalProfile {
  std::string system_prompt;
  std::string user_template;
  std::string question_marker = "New Question:";
};

CleanEvalProfile load_cleaneval_profile(const std::string& path);

struct CleanEvalOptions {
  std::string rephraser_model;
  std::string target_model;
  Scope scope = Scope::answer_only;
  double math_eps = 0.0;
  int rephrase_max_tokens = 1024;
  int generation_max_tokens = 1024;
  int workers = 1;
};

struct CleanEvalReport {
  std::string benchmark_id;
  std::string target_model;
  size_t evaluated = 0;                // samples in both accuracy runs
  size_t rephrase_parse_failures = 0;  // skipped samples
  double accuracy_original = 0.0;
  double accuracy_rephrased = 0.0;
  double gap = 0.0;  // original - rephrased; large positive marks contamination
};

nlohmann::json cleaneval_report_to_json(const CleanEvalReport& r);

// Rephrases every sample (same gold answer), then measures the target
// model's accuracy on the original and rephrased versions over the
// successfully rephrased subset. Multiple-choice questions carry their
// labeled options inline in the question text; generation tasks go through
// chat, mc_perplexity through score_text per choice.
CleanEvalReport cleaneval_run(const Benchmark& benchmark, LlmClient& client,
                              const CleanEvalProfile& profile,
                              const CleanEvalOptions& options);

// The question text as the model under test sees it: the bare question for
// free-form tasks, question plus "A: ..." option lines for multiple choice.
std::string render_eval_question(const Sample& sample, TaskKind kind);

// The rephrased benchmark variant built by cleaneval_run (exposed for
// persistence): parsed new questions, original answers/choices/gold.
struct CleanEvalRephrased {
  Benchmark benchmark;                    // rephrased subset
  std::vector<std::string> skipped_ids;   // parse failures
};

CleanEvalRephrased cleaneval_rephrase(const Benchmark& benchmark, LlmClient& client,
                                      const CleanEvalProfile& profile,
                                      const std::string& rephraser_model,
                                      int max_tokens = 1024, int workers = 1);

}  // namespace contamkit
