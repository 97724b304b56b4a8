#include "contamkit/corpus.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_set>

#include "contamkit/error.hpp"
#include "contamkit/rng.hpp"

namespace contamkit {

namespace {

bool blank_after_trim(const std::string& s) {
  for (unsigned char c : s) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
  }
  return true;
}

std::string file_stem(const std::string& path) {
  if (path == "-") return "stdin";
  size_t slash = path.find_last_of("/\\");
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  size_t dot = name.find_last_of('.');
  return dot == std::string::npos || dot == 0 ? name : name.substr(0, dot);
}

}  // namespace

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "math_extract") return TaskKind::math_extract;
  if (s == "mc_perplexity") return TaskKind::mc_perplexity;
  if (s == "mc_generative") return TaskKind::mc_generative;
  throw Error(ErrorCode::parameter,
              "unknown task kind '" + std::string(s) +
                  "' (expected math_extract, mc_perplexity or mc_generative)");
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::math_extract: return "math_extract";
    case TaskKind::mc_perplexity: return "mc_perplexity";
    case TaskKind::mc_generative: return "mc_generative";
  }
  return "unknown";
}

const Sample* Benchmark::find(std::string_view sample_id) const {
  for (const Sample& s : samples) {
    if (s.id == sample_id) return &s;
  }
  return nullptr;
}

void validate_sample(const Sample& s) {
  if (s.id.empty()) throw Error(ErrorCode::invariant, "sample id is empty");
  if (blank_after_trim(s.question)) {
    throw Error(ErrorCode::invariant, "field 'question' is empty", s.id);
  }
  if (blank_after_trim(s.answer)) {
    throw Error(ErrorCode::invariant, "field 'answer' is empty", s.id);
  }
  if (s.choices) {
    if (s.choices->empty()) {
      throw Error(ErrorCode::invariant, "field 'choices' is empty", s.id);
    }
    if (!s.gold_index) {
      throw Error(ErrorCode::invariant,
                  "field 'gold_index' missing although 'choices' is present", s.id);
    }
    if (*s.gold_index < 0 ||
        static_cast<size_t>(*s.gold_index) >= s.choices->size()) {
      throw Error(ErrorCode::invariant,
                  "field 'gold_index' out of range: " + std::to_string(*s.gold_index) +
                      " with " + std::to_string(s.choices->size()) + " choices",
                  s.id);
    }
  } else if (s.gold_index) {
    throw Error(ErrorCode::invariant,
                "field 'gold_index' present without 'choices'", s.id);
  }
}

void validate_document(const Sample& s) {
  if (s.id.empty()) throw Error(ErrorCode::invariant, "document id is empty");
  if (blank_after_trim(s.answer)) {
    throw Error(ErrorCode::invariant, "field 'answer' (document text) is empty", s.id);
  }
}

nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json j;
  j["id"] = s.id;
  if (s.instruction) j["instruction"] = *s.instruction;
  j["question"] = s.question;
  j["answer"] = s.answer;
  if (s.choices) j["choices"] = *s.choices;
  if (s.gold_index) j["gold_index"] = *s.gold_index;
  if (s.benchmark_id) j["benchmark_id"] = *s.benchmark_id;
  if (!s.tags.empty()) j["tags"] = s.tags;
  return j;
}

Sample sample_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) {
    throw Error(ErrorCode::parse, "sample line is not a JSON object", where);
  }
  auto require_string = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
      throw Error(ErrorCode::parse, std::string("field '") + key + "' is missing", where);
    }
    if (!it->is_string()) {
      throw Error(ErrorCode::parse, std::string("field '") + key + "' is not a string", where);
    }
    return it->get<std::string>();
  };

  Sample s;
  s.id = require_string("id");
  s.question = j.contains("question") ? require_string("question") : "";
  s.answer = require_string("answer");
  if (auto it = j.find("instruction"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw Error(ErrorCode::parse, "field 'instruction' is not a string", where);
    }
    s.instruction = it->get<std::string>();
  }
  if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) {
      throw Error(ErrorCode::parse, "field 'choices' is not an array", where);
    }
    std::vector<std::string> choices;
    for (const auto& c : *it) {
      if (!c.is_string()) {
        throw Error(ErrorCode::parse, "field 'choices' contains a non-string", where);
      }
      choices.push_back(c.get<std::string>());
    }
    s.choices = std::move(choices);
  }
  if (auto it = j.find("gold_index"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) {
      throw Error(ErrorCode::parse, "field 'gold_index' is not an integer", where);
    }
    s.gold_index = it->get<int>();
  }
  if (auto it = j.find("benchmark_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw Error(ErrorCode::parse, "field 'benchmark_id' is not a string", where);
    }
    s.benchmark_id = it->get<std::string>();
  }
  if (auto it = j.find("tags"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) {
      throw Error(ErrorCode::parse, "field 'tags' is not an object", where);
    }
    for (auto& [k, v] : it->items()) {
      if (!v.is_string()) {
        throw Error(ErrorCode::parse, "tag '" + k + "' is not a string", where);
      }
      s.tags[k] = v.get<std::string>();
    }
  }
  for (auto& [k, v] : j.items()) {
    static const std::unordered_set<std::string> known = {
        "id", "instruction", "question", "answer",
        "choices", "gold_index", "benchmark_id", "tags"};
    if (!known.count(k)) {
      throw Error(ErrorCode::parse, "unknown field '" + k + "'", where);
    }
  }
  return s;
}

std::string sample_to_json_line(const Sample& s) {
  return sample_to_json(s).dump();
}

namespace {

std::vector<Sample> load_samples_stream(std::istream& in, const std::string& name,
                                        bool benchmark_grade) {
  std::vector<Sample> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank_after_trim(line)) continue;
    std::string where = name + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);  // rejects invalid UTF-8
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad JSON: ") + e.what(), where);
    }
    Sample s = sample_from_json(j, where);
    try {
      if (benchmark_grade) {
        validate_sample(s);
      } else {
        validate_document(s);
      }
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), where + " (id " + s.id + ")");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void check_unique_ids(const std::vector<Sample>& samples, const std::string& name) {
  std::unordered_set<std::string> seen;
  for (const Sample& s : samples) {
    if (!seen.insert(s.id).second) {
      throw Error(ErrorCode::invariant, "duplicate id '" + s.id + "'", name);
    }
  }
}

}  // namespace

std::vector<Sample> load_samples_jsonl(const std::string& path, bool benchmark_grade) {
  if (path == "-") return load_samples_stream(std::cin, "stdin", benchmark_grade);
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open file", path);
  return load_samples_stream(in, path, benchmark_grade);
}

Benchmark load_benchmark_jsonl(const std::string& path, TaskKind kind,
                               const std::string& benchmark_id) {
  Benchmark b;
  b.task_kind = kind;
  b.samples = load_samples_jsonl(path, /*benchmark_grade=*/true);
  if (b.samples.empty()) {
    throw Error(ErrorCode::invariant, "benchmark has no samples", path);
  }
  check_unique_ids(b.samples, path);
  if (kind == TaskKind::mc_perplexity || kind == TaskKind::mc_generative) {
    for (const Sample& s : b.samples) {
      if (!s.choices) {
        throw Error(ErrorCode::invariant,
                    "multiple-choice task kind requires 'choices' on every sample",
                    s.id);
      }
    }
  }
  if (!benchmark_id.empty()) {
    b.id = benchmark_id;
  } else {
    bool uniform = true;
    std::string common;
    for (const Sample& s : b.samples) {
      if (!s.benchmark_id) { uniform = false; break; }
      if (common.empty()) common = *s.benchmark_id;
      else if (common != *s.benchmark_id) { uniform = false; break; }
    }
    b.id = uniform && !common.empty() ? common : file_stem(path);
  }
  return b;
}

Corpus load_corpus_jsonl(const std::string& path) {
  Corpus c;
  c.documents = load_samples_jsonl(path, /*benchmark_grade=*/false);
  check_unique_ids(c.documents, path);
  c.source_uri = path;
  return c;
}

void emit_jsonl(const std::vector<Sample>& samples, std::ostream& out) {
  for (const Sample& s : samples) {
    out << sample_to_json_line(s) << '\n';
  }
}

void save_samples_jsonl(const std::vector<Sample>& samples, const std::string& path) {
  if (path == "-") {
    emit_jsonl(samples, std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open file for writing", path);
  emit_jsonl(samples, out);
  if (!out) throw Error(ErrorCode::io, "write failed", path);
}

std::string format_alpaca(const Sample& s) {
  return format_alpaca_prompt(s) + s.answer;
}

std::string format_alpaca_prompt(const Sample& s) {
  std::string out;
  if (s.instruction) {
    out += "### Instruction:\n";
    out += *s.instruction;
    out += "\n\n";
  }
  out += "### Input:\n";
  out += s.question;
  out += "\n\n### Response:\n";
  return out;
}

AlpacaParts parse_alpaca(std::string_view text) {
  static constexpr std::string_view kInstruction = "### Instruction:\n";
  static constexpr std::string_view kInput = "### Input:\n";
  static constexpr std::string_view kResponse = "\n\n### Response:\n";
  static constexpr std::string_view kBlockSep = "\n\n";

  AlpacaParts parts;
  size_t input_pos;
  if (text.substr(0, kInstruction.size()) == kInstruction) {
    size_t body = kInstruction.size();
    size_t sep = text.find(std::string(kBlockSep) + std::string(kInput), body);
    if (sep == std::string_view::npos) {
      throw Error(ErrorCode::parse, "alpaca text lacks the Input block");
    }
    parts.instruction = std::string(text.substr(body, sep - body));
    input_pos = sep + kBlockSep.size();
  } else if (text.substr(0, kInput.size()) == kInput) {
    input_pos = 0;
  } else {
    throw Error(ErrorCode::parse, "alpaca text lacks the leading block marker");
  }
  size_t q_begin = input_pos + kInput.size();
  size_t resp = text.find(kResponse, q_begin);
  if (resp == std::string_view::npos) {
    throw Error(ErrorCode::parse, "alpaca text lacks the Response block");
  }
  parts.input = std::string(text.substr(q_begin, resp - q_begin));
  parts.response = std::string(text.substr(resp + kResponse.size()));
  return parts;
}

Benchmark strip_metadata(const Benchmark& b, uint64_t seed) {
  Benchmark out;
  out.id = b.id;
  out.task_kind = b.task_kind;
  out.samples = b.samples;
  for (Sample& s : out.samples) {
    s.benchmark_id.reset();
    s.tags.clear();
  }
  Rng rng(seed);
  shuffle(out.samples, rng);
  return out;
}

}  // namespace contamkit
