#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "contamkit/corpus.hpp"
#include "contamkit/detect_benchmark.hpp"
#include "contamkit/detect_oracle.hpp"
#include "contamkit/detect_sample.hpp"
#include "contamkit/eal.hpp"
#include "contamkit/error.hpp"
#include "contamkit/evalharness.hpp"
#include "contamkit/trace.hpp"

namespace contamkit::cli {
namespace {

std::string pick_model(const TraceStore& store, const std::string& flag_model) {
  if (!flag_model.empty()) return flag_model;
  std::vector<std::string> ids = store.model_ids();
  if (ids.size() == 1) return ids.front();
  std::string listing;
  for (const std::string& id : ids) listing += (listing.empty() ? "" : ", ") + id;
  throw Error(ErrorCode::parameter,
              "trace store holds " + std::to_string(ids.size()) +
                  " model ids; pick one with --model",
              listing);
}

// The contaminated side of a labeled split: selected ids that survived
// hardening (dropped ids never entered the mixture, so they stay clean).
std::set<std::string> manifest_positive_ids(const MixtureManifest& manifest) {
  std::set<std::string> positives(manifest.selected_ids.begin(),
                                  manifest.selected_ids.end());
  for (const std::string& id : manifest.dropped_ids) positives.erase(id);
  return positives;
}

// ----------------------------------------------------------------- score

struct ScoreOpts {
  CommonFlags common;
  std::string method;
  std::string traces;
  std::string out = "-";
  std::string generations;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  double k = 0.0;
  CLI::Option* o_k = nullptr;
};

void run_score(const ScoreOpts& o) {
  Config cfg = o.common.resolve();
  Scope scope = scope_from_string(cfg.scope);
  double k_percent = (o.o_k != nullptr && o.o_k->count() > 0) ? o.k : cfg.k_percent;

  std::vector<Score> scores;
  size_t skipped = 0;

  if (o.method == "blackbox_rouge") {
    if (o.generations.empty() || o.bench.empty()) {
      throw Error(ErrorCode::parameter,
                  "blackbox_rouge needs --generations and --bench");
    }
    Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                           o.benchmark_id);
    auto generations = load_generations_jsonl(o.generations);
    for (const auto& [sample_id, text] : generations) {
      const Sample* s = bench.find(sample_id);
      if (s == nullptr) {
        ++skipped;
        continue;
      }
      scores.push_back(score_blackbox_rouge(text, *s));
    }
  } else {
    if (o.traces.empty()) throw Error(ErrorCode::parameter, "--traces is required");
    TraceStore store = load_traces(o.traces);
    std::string model = pick_model(store, cfg.target_model);
    for (const auto& [key, trace] : store.all()) {
      if (key.variant != "original" || key.model_id != model) continue;
      if (o.method == "yeom") {
        scores.push_back(score_yeom(trace, scope));
      } else if (o.method == "min_k") {
        scores.push_back(score_min_k(trace, k_percent, scope));
      } else if (o.method == "lowercase") {
        const TokenTrace* twin = store.find(key.sample_id, "lowercase", model);
        if (twin == nullptr) {
          ++skipped;
          continue;
        }
        scores.push_back(score_lowercase(trace, *twin, scope));
      } else if (o.method == "reference") {
        if (cfg.reference_model.empty()) {
          throw Error(ErrorCode::config,
                      "reference scoring needs --reference-model");
        }
        const TokenTrace* ref = store.find(key.sample_id, "original", cfg.reference_model);
        if (ref == nullptr) {
          ++skipped;
          continue;
        }
        scores.push_back(score_reference(trace, *ref, scope));
      } else {
        throw Error(ErrorCode::parameter, "unknown method", o.method);
      }
    }
  }

  save_scores_jsonl(scores, o.out);
  std::cerr << o.method << ": " << scores.size() << " scores";
  if (skipped > 0) std::cerr << " (" << skipped << " skipped: missing pair)";
  std::cerr << '\n';
}

void add_score(CLI::App& app) {
  auto o = std::make_shared<ScoreOpts>();
  CLI::App* cmd = app.add_subcommand(
      "score", "Sample-level contamination scores from traces or generations");
  o->common.attach_config(*cmd);
  o->common.attach_models(*cmd);
  o->common.attach_scope(*cmd);
  cmd->add_option("--method", o->method,
                  "yeom, min_k, lowercase, reference or blackbox_rouge")
      ->required();
  cmd->add_option("--traces", o->traces, "Traces JSONL (grey-box methods)");
  o->o_k = cmd->add_option("--k", o->k, "Min-K%% percentile in (0,100]");
  cmd->add_option("--generations", o->generations,
                  "Generations JSONL (blackbox_rouge)");
  cmd->add_option("--bench", o->bench, "Benchmark JSONL (blackbox_rouge)");
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--out", o->out, "Scores JSONL (- for stdout)");
  cmd->callback([o] { run_score(*o); });
}

// ------------------------------------------------------------------- roc

struct RocOpts {
  CommonFlags common;
  std::string scores;
  std::string labels;
  std::string manifest;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string label;
  std::string out = "-";
  std::vector<double> fpr;
};

void run_roc(const RocOpts& o) {
  std::set<std::string> positives;
  std::set<std::string> negatives;
  std::string label = o.label;
  if (!o.labels.empty()) {
    nlohmann::json j = read_json_file(o.labels);
    for (const auto& id : j.at("positives")) positives.insert(id.get<std::string>());
    for (const auto& id : j.at("negatives")) negatives.insert(id.get<std::string>());
  } else if (!o.manifest.empty() && !o.bench.empty()) {
    MixtureManifest manifest = load_manifest(o.manifest);
    positives = manifest_positive_ids(manifest);
    Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                           o.benchmark_id);
    for (const Sample& s : bench.samples) {
      if (positives.count(s.id) == 0) negatives.insert(s.id);
    }
    if (label.empty()) label = bench.id + "/" + to_string(manifest.plan.mode);
  } else {
    throw Error(ErrorCode::parameter,
                "ground truth needed: --labels, or --manifest with --bench");
  }

  std::vector<Score> scores = load_scores_jsonl(o.scores);
  std::map<std::string, LabeledScoreSet> by_method;
  size_t unlabeled = 0;
  for (const Score& s : scores) {
    LabeledScoreSet& set = by_method[s.method_id];
    set.method_id = s.method_id;
    if (positives.count(s.sample_id) > 0) {
      set.positives.push_back(s);
    } else if (negatives.count(s.sample_id) > 0) {
      set.negatives.push_back(s);
    } else {
      ++unlabeled;
    }
  }

  const std::vector<double>& targets = o.fpr.empty() ? default_fpr_targets() : o.fpr;
  nlohmann::json reports = nlohmann::json::array();
  for (auto& [method_id, set] : by_method) {
    RocReport report = roc(set, targets);
    report.label = label;
    reports.push_back(roc_report_to_json(report));
    std::cerr << method_id << ": auc=" << report.auc
              << " tpr@" << targets.front() << "=" << report.tpr_at.begin()->second
              << " (" << set.positives.size() << "+/" << set.negatives.size() << "-)\n";
  }
  if (unlabeled > 0) std::cerr << unlabeled << " scores outside the labeled split\n";
  write_json_file(reports, o.out);
}

void add_roc(CLI::App& app) {
  auto o = std::make_shared<RocOpts>();
  CLI::App* cmd = app.add_subcommand(
      "roc", "ROC sweep of labeled scores; emits AUC and TPR at fixed FPR");
  o->common.attach_config(*cmd);
  cmd->add_option("--scores", o->scores, "Scores JSONL")->required();
  cmd->add_option("--labels", o->labels,
                  "JSON file {\"positives\": [ids], \"negatives\": [ids]}");
  cmd->add_option("--manifest", o->manifest,
                  "Mixture manifest providing the contaminated side");
  cmd->add_option("--bench", o->bench, "Benchmark JSONL (id universe for --manifest)");
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--label", o->label, "Run label stored in the report");
  cmd->add_option("--fpr", o->fpr, "FPR targets (repeatable; default 0.01 0.05 0.1)");
  cmd->add_option("--out", o->out, "Report JSON (- for stdout); always an array");
  cmd->callback([o] { run_roc(*o); });
}

// ------------------------------------------------------------------ dpcc

struct DpccOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string traces;
  std::string profile;
  std::string out = "-";
  bool generate = false;
  int m = 0;
  double threshold = 0.0;
  CLI::Option* o_m = nullptr;
  CLI::Option* o_threshold = nullptr;
};

void run_dpcc_generate(const DpccOpts& o, const Config& cfg, const Benchmark& bench) {
  std::string profile_path = o.profile.empty() ? cfg.perturb_profile : o.profile;
  if (profile_path.empty()) {
    throw Error(ErrorCode::config, "perturbation profile not set (use --profile)");
  }
  if (cfg.rephraser_model.empty()) {
    throw Error(ErrorCode::config, "perturbation needs --rephraser-model");
  }
  int m = (o.o_m != nullptr && o.o_m->count() > 0) ? o.m : cfg.dpcc_m;
  RephraseProfile profile = load_rephrase_profile(profile_path);
  LlmClient client = make_client(cfg);

  std::vector<PerturbationResult> results(bench.samples.size());
  parallel_for(bench.samples.size(), cfg.workers, [&](size_t i) {
    results[i] = generate_perturbations(bench.samples[i], m, client, profile,
                                        cfg.rephraser_model, cfg.max_tokens);
  });

  std::vector<Sample> out;
  size_t failures = 0;
  for (PerturbationResult& r : results) {
    for (Sample& s : r.samples) out.push_back(std::move(s));
    failures += r.parse_failures;
  }
  save_samples_jsonl(out, o.out);
  std::cerr << "perturbations: " << out.size() << " (" << failures
            << " parse failures)\n";
}

void run_dpcc(const DpccOpts& o) {
  Config cfg = o.common.resolve();
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  if (o.generate) {
    run_dpcc_generate(o, cfg, bench);
    return;
  }
  if (o.traces.empty()) {
    throw Error(ErrorCode::parameter, "--traces is required (or use --generate)");
  }
  TraceStore store = load_traces(o.traces);
  std::string model = pick_model(store, cfg.target_model);
  double threshold = (o.o_threshold != nullptr && o.o_threshold->count() > 0)
                         ? o.threshold
                         : cfg.dpcc_threshold;
  DpccReport report =
      dpcc_benchmark(bench, store, model, scope_from_string(cfg.scope), threshold);
  write_json_file(dpcc_report_to_json(report), o.out);
  std::cerr << "dpcc: score=" << report.benchmark_score << " threshold=" << threshold
            << (report.flagged ? " FLAGGED" : " not flagged") << " (scored "
            << report.scored_samples << ", skipped " << report.skipped_samples << ")\n";
}

void add_dpcc(CLI::App& app) {
  auto o = std::make_shared<DpccOpts>();
  CLI::App* cmd = app.add_subcommand(
      "dpcc", "Perturbation-comparison benchmark detector (report or --generate)");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  o->common.attach_scope(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--traces", o->traces,
                  "Traces JSONL holding original + perturbed:<i> variants");
  cmd->add_flag("--generate", o->generate,
                "Generate perturbed samples via the rephraser instead of scoring");
  cmd->add_option("--profile", o->profile, "Perturbation prompt profile (--generate)");
  o->o_m = cmd->add_option("--m", o->m, "Perturbations per sample (--generate)");
  o->o_threshold =
      cmd->add_option("--threshold", o->threshold, "Flagging threshold (strict >)");
  cmd->add_option("--out", o->out, "Report JSON, or perturbed samples JSONL");
  cmd->callback([o] { run_dpcc(*o); });
}

// ------------------------------------------------------------- cleaneval

struct CleanevalOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string profile;
  std::string out = "-";
  std::string rephrased_out;
  double math_eps = 0.0;
};

void run_cleaneval(const CleanevalOpts& o) {
  Config cfg = o.common.resolve();
  std::string profile_path = o.profile.empty() ? cfg.cleaneval_profile : o.profile;
  if (profile_path.empty()) {
    throw Error(ErrorCode::config, "cleaneval profile not set (use --profile)");
  }
  if (cfg.target_model.empty()) {
    throw Error(ErrorCode::config, "cleaneval needs --model");
  }
  if (cfg.rephraser_model.empty()) {
    throw Error(ErrorCode::config, "cleaneval needs --rephraser-model");
  }
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  CleanEvalProfile profile = load_cleaneval_profile(profile_path);
  LlmClient client = make_client(cfg);

  CleanEvalOptions options;
  options.rephraser_model = cfg.rephraser_model;
  options.target_model = cfg.target_model;
  options.scope = scope_from_string(cfg.scope);
  options.math_eps = o.math_eps;
  options.rephrase_max_tokens = cfg.max_tokens;
  options.generation_max_tokens = cfg.max_tokens;
  options.workers = cfg.workers;

  CleanEvalReport report = cleaneval_run(bench, client, profile, options);
  write_json_file(cleaneval_report_to_json(report), o.out);
  if (!o.rephrased_out.empty()) {
    CleanEvalRephrased rephrased = cleaneval_rephrase(
        bench, client, profile, cfg.rephraser_model, cfg.max_tokens, cfg.workers);
    save_samples_jsonl(rephrased.benchmark.samples, o.rephrased_out);
  }
  std::cerr << "cleaneval: original=" << report.accuracy_original
            << " rephrased=" << report.accuracy_rephrased << " gap=" << report.gap
            << " (n=" << report.evaluated << ")\n";
}

void add_cleaneval(CLI::App& app) {
  auto o = std::make_shared<CleanevalOpts>();
  CLI::App* cmd = app.add_subcommand(
      "cleaneval", "Rephrase-and-re-evaluate accuracy gap for one benchmark");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  o->common.attach_scope(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--profile", o->profile, "CleanEval prompt profile");
  cmd->add_option("--math-eps", o->math_eps,
                  "Numeric tolerance for math judging (0 = exact)");
  cmd->add_option("--rephrased-out", o->rephrased_out,
                  "Also write the rephrased benchmark JSONL here");
  cmd->add_option("--out", o->out, "Report JSON (- for stdout)");
  cmd->callback([o] { run_cleaneval(*o); });
}

// ----------------------------------------------------------------- ngram

struct NgramIndexOpts {
  CommonFlags common;
  std::string in;
  std::string out;
  uint32_t n = 0;
  double bloom_fpr = 0.01;
  bool no_bloom = false;
  CLI::Option* o_n = nullptr;
};

void run_ngram_index(const NgramIndexOpts& o) {
  Config cfg = o.common.resolve();
  uint32_t n = (o.o_n != nullptr && o.o_n->count() > 0) ? o.n : cfg.ngram_n;
  Corpus corpus = load_corpus_jsonl(o.in);
  std::optional<BloomConfig> bloom;
  if (!o.no_bloom) bloom = BloomConfig{o.bloom_fpr};
  NgramIndex index = build_index(corpus, n, bloom);
  save_index(index, o.out);
  std::cerr << "index: " << index.doc_count << " docs, " << index.ngram_count()
            << " distinct " << n << "-grams"
            << (index.bloom ? " (bloom " + std::to_string(index.bloom->bit_count) + " bits)"
                            : "")
            << '\n';
}

struct NgramScanOpts {
  CommonFlags common;
  std::string index;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string out = "-";
};

void run_ngram_scan(const NgramScanOpts& o) {
  NgramIndex index = load_index(o.index);
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  OverlapReport report = scan_benchmark(index, bench);
  write_json_file(overlap_report_to_json(report), o.out);
  size_t flagged = 0;
  for (const auto& [id, overlap] : report.per_sample) flagged += overlap.flagged ? 1 : 0;
  std::cerr << "scan: " << flagged << "/" << report.per_sample.size()
            << " samples flagged (rate " << report.detection_rate << ")\n";
}

void add_ngram(CLI::App& app) {
  CLI::App* cmd = app.add_subcommand("ngram", "Verbatim n-gram overlap scanner");
  cmd->require_subcommand(1);

  auto oi = std::make_shared<NgramIndexOpts>();
  CLI::App* index_cmd =
      cmd->add_subcommand("index", "Hash every n-gram of a corpus into a binary index");
  oi->common.attach_config(*index_cmd);
  index_cmd->add_option("--in", oi->in, "Corpus JSONL (- for stdin)")->required();
  index_cmd->add_option("--out", oi->out, "Index file")->required();
  oi->o_n = index_cmd->add_option("--n", oi->n, "Window length in tokens");
  index_cmd->add_option("--bloom-fpr", oi->bloom_fpr,
                        "Bloom prefilter false-positive target");
  index_cmd->add_flag("--no-bloom", oi->no_bloom, "Skip the Bloom prefilter");
  index_cmd->callback([oi] { run_ngram_index(*oi); });

  auto os = std::make_shared<NgramScanOpts>();
  CLI::App* scan_cmd =
      cmd->add_subcommand("scan", "Scan a benchmark against an n-gram index");
  os->common.attach_config(*scan_cmd);
  scan_cmd->add_option("--index", os->index, "Index file from `ngram index`")->required();
  scan_cmd->add_option("--bench", os->bench, "Benchmark JSONL")->required();
  scan_cmd->add_option("--task-kind", os->task_kind,
                       "math_extract, mc_perplexity or mc_generative");
  scan_cmd->add_option("--benchmark-id", os->benchmark_id, "Override the benchmark id");
  scan_cmd->add_option("--out", os->out, "Overlap report JSON (- for stdout)");
  scan_cmd->callback([os] { run_ngram_scan(*os); });
}

// --------------------------------------------------------- decontaminate

struct DecontaminateOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string corpus;
  std::string profile;
  std::string out = "-";
  std::string flagged_out;
  size_t top_k = 32;
};

void run_decontaminate(const DecontaminateOpts& o) {
  Config cfg = o.common.resolve();
  std::string profile_path = o.profile.empty() ? cfg.decontaminator_profile : o.profile;
  if (profile_path.empty()) {
    throw Error(ErrorCode::config, "decontaminator profile not set (use --profile)");
  }
  if (cfg.target_model.empty()) {
    throw Error(ErrorCode::config, "decontaminate needs a judge model (--model)");
  }
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  Corpus corpus = load_corpus_jsonl(o.corpus);
  DecontaminatorProfile profile = load_decontaminator_profile(profile_path);
  LlmClient client = make_client(cfg);

  std::vector<std::vector<DecontaminatorVerdict>> verdicts(bench.samples.size());
  parallel_for(bench.samples.size(), cfg.workers, [&](size_t i) {
    const Sample& s = bench.samples[i];
    std::vector<Candidate> candidates = prefilter_candidates(s, corpus, o.top_k);
    verdicts[i] = llm_decontaminate(s, candidates, corpus, client, profile,
                                    cfg.target_model);
  });

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (o.out != "-") {
    file.open(o.out, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", o.out);
    out = &file;
  }
  std::vector<std::string> flagged;
  for (size_t i = 0; i < bench.samples.size(); ++i) {
    bool hit = false;
    for (const DecontaminatorVerdict& v : verdicts[i]) {
      *out << verdict_to_json(v).dump() << '\n';
      hit = hit || v.is_rephrase;
    }
    if (hit) flagged.push_back(bench.samples[i].id);
  }
  if (!*out) throw Error(ErrorCode::io, "write failed", o.out);
  if (!o.flagged_out.empty()) {
    write_json_file(nlohmann::json{{"flagged", flagged}}, o.flagged_out);
  }
  std::cerr << "decontaminate: " << flagged.size() << "/" << bench.samples.size()
            << " samples flagged\n";
}

void add_decontaminate(CLI::App& app) {
  auto o = std::make_shared<DecontaminateOpts>();
  CLI::App* cmd = app.add_subcommand(
      "decontaminate", "LLM rephrase-judgment over prefiltered corpus candidates");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--corpus", o->corpus, "Training corpus JSONL")->required();
  cmd->add_option("--profile", o->profile, "Judgment prompt profile");
  cmd->add_option("--top-k", o->top_k, "Jaccard prefilter candidates per sample");
  cmd->add_option("--out", o->out, "Verdicts JSONL (- for stdout)");
  cmd->add_option("--flagged-out", o->flagged_out,
                  "Also write {\"flagged\": [sample ids]} JSON here");
  cmd->callback([o] { run_decontaminate(*o); });
}

// ------------------------------------------------------------------ eval

struct EvalOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string generations;
  std::string choice_traces;
  std::string manifest;
  std::string subset = "all";
  std::string out = "-";
  double math_eps = 0.0;
};

void run_eval(const EvalOpts& o) {
  Config cfg = o.common.resolve();
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);

  std::vector<std::string> subset_ids;
  if (o.subset == "all") {
    for (const Sample& s : bench.samples) subset_ids.push_back(s.id);
  } else if (o.subset == "contaminated" || o.subset == "uncontaminated") {
    if (o.manifest.empty()) {
      throw Error(ErrorCode::parameter, "subset " + o.subset + " needs --manifest");
    }
    std::set<std::string> positives = manifest_positive_ids(load_manifest(o.manifest));
    for (const Sample& s : bench.samples) {
      bool contaminated = positives.count(s.id) > 0;
      if (contaminated == (o.subset == "contaminated")) subset_ids.push_back(s.id);
    }
  } else {
    throw Error(ErrorCode::parameter,
                "subset must be all, contaminated or uncontaminated", o.subset);
  }

  EvalOutputs outputs;
  if (!o.generations.empty()) outputs.generations = load_generations_jsonl(o.generations);
  if (!o.choice_traces.empty()) {
    TraceStore store = load_traces(o.choice_traces);
    std::string model = pick_model(store, cfg.target_model);
    for (const Sample& s : bench.samples) {
      if (!s.choices) continue;
      std::vector<const TokenTrace*> found = store.find_prefix(s.id, "choice:", model);
      std::vector<TokenTrace> ordered(s.choices->size());
      size_t placed = 0;
      for (const TokenTrace* t : found) {
        size_t idx = 0;
        try {
          idx = static_cast<size_t>(std::stoul(t->variant.substr(7)));
        } catch (const std::exception&) {
          continue;
        }
        if (idx < ordered.size()) {
          ordered[idx] = *t;
          ++placed;
        }
      }
      if (placed == ordered.size()) outputs.choice_traces[s.id] = std::move(ordered);
    }
  }

  AccuracyReport report = evaluate(bench, subset_ids, outputs, o.subset,
                                   scope_from_string(cfg.scope), o.math_eps);
  write_json_file(accuracy_report_to_json(report), o.out);
  std::cerr << "eval[" << o.subset << "]: accuracy=" << report.accuracy << " ("
            << report.correct << "/" << report.total << ", missing "
            << report.missing << ")\n";
}

void add_eval(CLI::App& app) {
  auto o = std::make_shared<EvalOpts>();
  CLI::App* cmd = app.add_subcommand(
      "eval", "Benchmark accuracy from generations and/or per-choice traces");
  o->common.attach_config(*cmd);
  o->common.attach_models(*cmd);
  o->common.attach_scope(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--generations", o->generations, "Generations JSONL");
  cmd->add_option("--choice-traces", o->choice_traces,
                  "Traces JSONL with choice:<i> variants (mc_perplexity)");
  cmd->add_option("--manifest", o->manifest, "Mixture manifest (for subset splits)");
  cmd->add_option("--subset", o->subset, "all, contaminated or uncontaminated");
  cmd->add_option("--math-eps", o->math_eps,
                  "Numeric tolerance for math judging (0 = exact)");
  cmd->add_option("--out", o->out, "Accuracy report JSON (- for stdout)");
  cmd->callback([o] { run_eval(*o); });
}

// ---------------------------------------------------------------- report

struct ReportOpts {
  std::vector<std::string> roc_files;
  std::string out = "-";
  std::string csv;
};

void run_report(const ReportOpts& o) {
  std::vector<RocReport> reports;
  for (const std::string& path : o.roc_files) {
    nlohmann::json j = read_json_file(path);
    if (j.is_array()) {
      for (const auto& item : j) reports.push_back(roc_report_from_json(item));
    } else {
      reports.push_back(roc_report_from_json(j));
    }
  }
  std::vector<MethodSummary> summaries = summarize_rocs(reports);
  write_json_file(summaries_to_json(summaries), o.out);
  if (!o.csv.empty()) {
    std::ofstream file(o.csv, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", o.csv);
    file << summaries_to_csv(summaries);
    if (!file) throw Error(ErrorCode::io, "write failed", o.csv);
  }
  std::cerr << "report: " << summaries.size() << " methods over " << reports.size()
            << " runs\n";
}

void add_report(CLI::App& app) {
  auto o = std::make_shared<ReportOpts>();
  CLI::App* cmd = app.add_subcommand(
      "report", "Aggregate ROC reports into per-method mean AUC / TPR tables");
  cmd->add_option("--roc", o->roc_files, "ROC report JSON (repeatable)")->required();
  cmd->add_option("--out", o->out, "Summary JSON (- for stdout)");
  cmd->add_option("--csv", o->csv, "Also write a CSV table here");
  cmd->callback([o] { run_report(*o); });
}

}  // namespace

void register_detect_commands(CLI::App& app) {
  add_score(app);
  add_roc(app);
  add_dpcc(app);
  add_cleaneval(app);
  add_ngram(app);
  add_decontaminate(app);
  add_eval(app);
  add_report(app);
}

}  // namespace contamkit::cli
