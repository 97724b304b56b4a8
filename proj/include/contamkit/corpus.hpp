#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace contamkit {

// One canonical record schema for benchmark samples, raw corpus documents
// and mixture entries keeps every downstream tool interoperable.
// JSONL field names are fixed: id, instruction, question, answer, choices,
// gold_index, benchmark_id, tags. Absent optionals are omitted on emit.
struct Sample {
  std::string id;
  std::optional<std::string> instruction;
  std::string question;
  std::string answer;
  std::optional<std::vector<std::string>> choices;
  std::optional<int> gold_index;
  std::optional<std::string> benchmark_id;
  std::map<std::string, std::string> tags;

  bool operator==(const Sample&) const = default;
};

enum class TaskKind { math_extract, mc_perplexity, mc_generative };

TaskKind task_kind_from_string(std::string_view s);
std::string to_string(TaskKind kind);

struct Benchmark {
  std::string id;
  TaskKind task_kind = TaskKind::math_extract;
  std::vector<Sample> samples;

  const Sample* find(std::string_view sample_id) const;
};

// Raw training-pool documents; `answer` doubles as the document text, so
// corpus validation allows an empty question (benchmark validation does not).
struct Corpus {
  std::vector<Sample> documents;
  std::string source_uri;
};

// Benchmark-grade validation: non-empty id/question/answer (after trimming),
// gold_index in range when choices present. Throws Error(invariant).
void validate_sample(const Sample& s);
// Corpus-grade validation: non-empty id and answer only.
void validate_document(const Sample& s);

// JSON (de)serialization for one sample. from_sample_json throws
// Error(parse|invariant) naming the offending field; `where` seeds the
// error context (file:line).
nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j, const std::string& where);

// Canonical line form: compact dump, keys sorted, absent fields omitted.
std::string sample_to_json_line(const Sample& s);

// Loaders accept "-" for stdin. Errors carry file and line number.
// Benchmark loading enforces unique ids, benchmark-grade sample validity
// and, for multiple-choice kinds, choices+gold_index on every sample.
// `benchmark_id` overrides the derived id (uniform per-sample benchmark_id
// when present, else the file stem).
Benchmark load_benchmark_jsonl(const std::string& path,
                               TaskKind kind = TaskKind::math_extract,
                               const std::string& benchmark_id = "");
Corpus load_corpus_jsonl(const std::string& path);
std::vector<Sample> load_samples_jsonl(const std::string& path, bool benchmark_grade);

void emit_jsonl(const std::vector<Sample>& samples, std::ostream& out);
void save_samples_jsonl(const std::vector<Sample>& samples, const std::string& path);

// Alpaca instruction format. The Instruction block is omitted entirely
// when the sample has no instruction:
//   ### Instruction:\n{instruction}\n\n### Input:\n{q}\n\n### Response:\n{a}
std::string format_alpaca(const Sample& s);
// Everything up to and including "### Response:\n" (the scoring prefix).
std::string format_alpaca_prompt(const Sample& s);

struct AlpacaParts {
  std::optional<std::string> instruction;
  std::string input;
  std::string response;

  bool operator==(const AlpacaParts&) const = default;
};
// Inverse of format_alpaca for marker-free field content.
AlpacaParts parse_alpaca(std::string_view text);

// Evasive-actor simulation: drops benchmark_id and tags from every sample
// and destroys canonical ordering with a seeded shuffle. Question/answer
// content is preserved exactly.
Benchmark strip_metadata(const Benchmark& b, uint64_t seed);

}  // namespace contamkit
