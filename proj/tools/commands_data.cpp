#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "contamkit/corpus.hpp"
#include "contamkit/error.hpp"
#include "contamkit/textmetrics.hpp"
#include "contamkit/trace.hpp"

namespace contamkit::cli {
namespace {

std::string slurp_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorCode::io, "cannot open file", path);
  std::ostringstream buf;
  buf << file.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------- ingest

struct IngestOpts {
  CommonFlags common;
  std::string in;
  std::string out = "-";
  std::string benchmark_id;
  std::string task_kind = "math_extract";
  bool corpus = false;
};

void run_ingest(const IngestOpts& o) {
  if (o.corpus) {
    Corpus corpus = load_corpus_jsonl(o.in);
    save_samples_jsonl(corpus.documents, o.out);
    std::cerr << "ingested " << corpus.documents.size() << " documents\n";
    return;
  }
  Benchmark bench = load_benchmark_jsonl(o.in, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  for (Sample& s : bench.samples) s.benchmark_id = bench.id;
  save_samples_jsonl(bench.samples, o.out);
  std::cerr << "ingested " << bench.samples.size() << " samples (benchmark "
            << bench.id << ", " << to_string(bench.task_kind) << ")\n";
}

void add_ingest(CLI::App& app) {
  auto o = std::make_shared<IngestOpts>();
  CLI::App* cmd = app.add_subcommand(
      "ingest", "Validate a JSONL record file and emit canonical lines");
  o->common.attach_config(*cmd);
  cmd->add_option("--in", o->in, "Input JSONL (- for stdin)")->required();
  cmd->add_option("--out", o->out, "Output JSONL (- for stdout)");
  cmd->add_option("--benchmark-id", o->benchmark_id,
                  "Override the benchmark id (default: uniform per-sample id, else file stem)");
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_flag("--corpus", o->corpus,
                "Treat input as raw corpus documents (id + answer text only)");
  cmd->callback([o] { run_ingest(*o); });
}

// ----------------------------------------------------------------- rouge

struct RougeOpts {
  std::string text_a;
  std::string text_b;
  std::string file_a;
  std::string file_b;
};

void run_rouge(const RougeOpts& o) {
  std::string a = o.file_a.empty() ? o.text_a : slurp_file(o.file_a);
  std::string b = o.file_b.empty() ? o.text_b : slurp_file(o.file_b);
  TokenSeq ta = normalize_tokenize(a);
  TokenSeq tb = normalize_tokenize(b);
  nlohmann::json out = {{"rouge_l", rouge_l_tokens(ta, tb)},
                        {"lcs", lcs_len(ta, tb)},
                        {"tokens_a", ta.size()},
                        {"tokens_b", tb.size()}};
  std::cout << out.dump() << '\n';
}

void add_rouge(CLI::App& app) {
  auto o = std::make_shared<RougeOpts>();
  CLI::App* cmd =
      app.add_subcommand("rouge", "ROUGE-L F1 between two texts (debugging aid)");
  cmd->add_option("text_a", o->text_a, "Candidate text");
  cmd->add_option("text_b", o->text_b, "Reference text");
  cmd->add_option("--file-a", o->file_a, "Read candidate from file");
  cmd->add_option("--file-b", o->file_b, "Read reference from file");
  cmd->callback([o] {
    if (o->file_a.empty() && o->text_a.empty() && o->file_b.empty() && o->text_b.empty()) {
      throw Error(ErrorCode::parameter, "give two texts or --file-a/--file-b");
    }
    run_rouge(*o);
  });
}

// ----------------------------------------------------------------- trace

struct TraceOpts {
  CommonFlags common;
  std::string in;
  std::string out;
  std::string format = "alpaca";
  bool with_lowercase = false;
  bool per_choice = false;
  bool corpus = false;
};

struct TraceJob {
  size_t sample_index = 0;
  std::string variant;
  std::string prefix;
  std::string continuation;
};

std::string trace_prefix(const Sample& s, const std::string& format) {
  if (format == "alpaca") return format_alpaca_prompt(s);
  if (format == "qa") return s.question.empty() ? std::string() : s.question + "\n";
  throw Error(ErrorCode::parameter, "unknown trace format (alpaca or qa)", format);
}

void run_trace(const TraceOpts& o) {
  Config cfg = o.common.resolve();
  if (cfg.target_model.empty()) {
    throw Error(ErrorCode::config, "target model not set (use --model)");
  }
  LlmClient client = make_client(cfg);
  std::vector<Sample> samples = load_samples_jsonl(o.in, /*benchmark_grade=*/!o.corpus);

  std::vector<TraceJob> jobs;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    auto tag = s.tags.find("variant");
    std::string base_variant = tag == s.tags.end() ? "original" : tag->second;
    std::string prefix = trace_prefix(s, o.format);
    jobs.push_back({i, base_variant, prefix, s.answer});
    if (o.with_lowercase && base_variant == "original") {
      jobs.push_back({i, "lowercase", ascii_lower(prefix), ascii_lower(s.answer)});
    }
    if (o.per_choice && s.choices) {
      for (size_t c = 0; c < s.choices->size(); ++c) {
        jobs.push_back({i, "choice:" + std::to_string(c), prefix, (*s.choices)[c]});
      }
    }
  }

  std::vector<TokenTrace> results(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](size_t j) {
    const TraceJob& job = jobs[j];
    TokenTrace t = client.score_text(cfg.target_model, job.prefix, job.continuation);
    t.sample_id = samples[job.sample_index].id;
    t.variant = job.variant;
    t.model_id = cfg.target_model;
    results[j] = std::move(t);
  });

  TraceStore store;
  for (TokenTrace& t : results) store.insert(std::move(t));
  save_traces(store, o.out);
  std::cerr << "traces written: " << store.size() << " (network "
            << client.network_calls() << ", cache hits " << client.cache_hits()
            << ")\n";
}

void add_trace(CLI::App& app) {
  auto o = std::make_shared<TraceOpts>();
  CLI::App* cmd = app.add_subcommand(
      "trace", "Collect per-token logprob traces for samples from a model");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  cmd->add_option("--in", o->in, "Samples JSONL (- for stdin)")->required();
  cmd->add_option("--out", o->out, "Traces JSONL (- for stdout)")->required();
  cmd->add_option("--format", o->format,
                  "Scoring prefix: alpaca (finetuning prompt) or qa (bare question)");
  cmd->add_flag("--with-lowercase", o->with_lowercase,
                "Also trace the case-folded twin of each original sample");
  cmd->add_flag("--per-choice", o->per_choice,
                "Also trace every answer choice (variant choice:<i>)");
  cmd->add_flag("--corpus", o->corpus, "Input is corpus documents, not benchmark samples");
  cmd->callback([o] { run_trace(*o); });
}

}  // namespace

void register_data_commands(CLI::App& app) {
  add_ingest(app);
  add_rouge(app);
  add_trace(app);
}

}  // namespace contamkit::cli
