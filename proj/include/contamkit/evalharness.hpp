#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/corpus.hpp"
#include "contamkit/detect_sample.hpp"
#include "contamkit/trace.hpp"

namespace contamkit {

// Detector outputs split by ground truth. Both sides must be non-empty and
// share one method_id.
struct LabeledScoreSet {
  std::string method_id;
  std::vector<Score> positives;  // contaminated
  std::vector<Score> negatives;  // clean
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

struct RocReport {
  std::string method_id;
  std::string label;  // free-form run label (benchmark, mode, ...)
  std::vector<RocPoint> points;
  double auc = 0.0;
  // Key: FPR target. Value: best TPR over thresholds with FPR <= target.
  std::map<double, double> tpr_at;
};

inline const std::vector<double>& default_fpr_targets() {
  // 0.01 is the headline operating point; 0.05/0.1 are diagnostics.
  static const std::vector<double> targets = {0.01, 0.05, 0.1};
  return targets;
}

// Threshold sweep over all distinct score values plus +infinity, with the
// decision rule value >= threshold => contaminated. Points are ordered by
// ascending FPR; AUC is the trapezoidal integral. A degenerate all-tied
// input yields points {(0,0), (1,1)}, AUC 0.5 and tpr_at[0.01] = 0.
RocReport roc(const LabeledScoreSet& scores,
              const std::vector<double>& fpr_targets = default_fpr_targets());

nlohmann::json roc_report_to_json(const RocReport& r);
RocReport roc_report_from_json(const nlohmann::json& j);

// Correct iff the canonical final number of the generation equals the
// canonical final number of the gold answer (exact decimal comparison;
// eps > 0 switches to |a-b| <= eps on the numeric values).
bool judge_math(const Sample& sample, const std::string& generation, double eps = 0.0);

// Correct iff the lowest perplexity over correct choices beats (strictly)
// the lowest over incorrect ones. Gold flags come from gold_index plus an
// optional multi-gold tag "gold_indices" (comma-separated). Traces are
// index-aligned with sample.choices.
bool judge_mc_perplexity(const Sample& sample, const std::vector<TokenTrace>& choice_traces,
                         Scope scope = Scope::answer_only);

// Correct iff argmax ROUGE-L(generation, choice) lands on gold_index;
// ties break toward the lowest index.
bool judge_mc_generative(const Sample& sample, const std::string& generation);

// Model outputs feeding evaluate(): free-text generations by sample id
// and/or per-choice traces (ordered by choice index) by sample id.
struct EvalOutputs {
  std::map<std::string, std::string> generations;
  std::map<std::string, std::vector<TokenTrace>> choice_traces;
};

// Generations JSONL: one {"sample_id","text"} object per line. "-" is
// stdin/stdout. Duplicate sample ids are a parse error.
std::map<std::string, std::string> load_generations_jsonl(const std::string& path);
void save_generations_jsonl(const std::map<std::string, std::string>& generations,
                            const std::string& path);

struct AccuracyReport {
  std::string benchmark_id;
  std::string subset;  // e.g. "contaminated", "uncontaminated", "all"
  size_t total = 0;
  size_t correct = 0;
  size_t missing = 0;  // no output supplied; counted incorrect
  double accuracy = 0.0;
};

nlohmann::json accuracy_report_to_json(const AccuracyReport& r);

// Dispatches on benchmark.task_kind. subset_ids must be non-empty and every
// id must exist in the benchmark; samples lacking an output are counted
// incorrect and tallied in `missing`.
AccuracyReport evaluate(const Benchmark& benchmark,
                        const std::vector<std::string>& subset_ids,
                        const EvalOutputs& outputs, const std::string& subset_name,
                        Scope scope = Scope::answer_only, double math_eps = 0.0);

// Per-method aggregation across runs (plain means, no variance bands).
struct MethodSummary {
  std::string method_id;
  size_t runs = 0;
  double mean_auc = 0.0;
  std::map<double, double> mean_tpr_at;
};

std::vector<MethodSummary> summarize_rocs(const std::vector<RocReport>& reports);
nlohmann::json summaries_to_json(const std::vector<MethodSummary>& summaries);
std::string summaries_to_csv(const std::vector<MethodSummary>& summaries);

}  // namespace contamkit
