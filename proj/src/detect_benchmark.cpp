#include "contamkit/detect_benchmark.hpp"

#include <algorithm>
#include <mutex>

#include "contamkit/error.hpp"
#include "contamkit/evalharness.hpp"

namespace contamkit {

double dpcc_sample_ratio(const TokenTrace& original,
                         const std::vector<const TokenTrace*>& perturbed, Scope scope) {
  if (perturbed.empty()) {
    throw Error(ErrorCode::parameter, "empty perturbation set", original.sample_id);
  }
  if (original.variant != "original") {
    throw Error(ErrorCode::pairing, "expected an original-variant trace, got '" +
                                        original.variant + "'",
                original.sample_id);
  }
  double orig_ppl = perplexity(original, scope);
  size_t higher = 0;
  for (const TokenTrace* p : perturbed) {
    if (p->sample_id != original.sample_id || p->model_id != original.model_id) {
      throw Error(ErrorCode::pairing, "perturbed trace does not pair with original",
                  original.sample_id);
    }
    if (p->variant.rfind("perturbed:", 0) != 0) {
      throw Error(ErrorCode::pairing,
                  "perturbed trace variant must start with 'perturbed:', got '" +
                      p->variant + "'",
                  original.sample_id);
    }
    if (perplexity(*p, scope) > orig_ppl) ++higher;  // strict
  }
  return static_cast<double>(higher) / static_cast<double>(perturbed.size());
}

double dpcc_sample_ratio(const TokenTrace& original,
                         const std::vector<TokenTrace>& perturbed, Scope scope) {
  std::vector<const TokenTrace*> ptrs;
  ptrs.reserve(perturbed.size());
  for (const TokenTrace& t : perturbed) ptrs.push_back(&t);
  return dpcc_sample_ratio(original, ptrs, scope);
}

nlohmann::json dpcc_report_to_json(const DpccReport& r) {
  return {{"benchmark_id", r.benchmark_id},
          {"model_id", r.model_id},
          {"threshold", r.threshold},
          {"benchmark_score", r.benchmark_score},
          {"flagged", r.flagged},
          {"perturbations_per_sample", r.perturbations_per_sample},
          {"scored_samples", r.scored_samples},
          {"skipped_samples", r.skipped_samples},
          {"per_sample_ratio", r.per_sample_ratio}};
}

DpccReport dpcc_benchmark(const Benchmark& benchmark, const TraceStore& traces,
                          const std::string& model_id, Scope scope, double threshold,
                          const std::vector<std::string>* subset_ids) {
  DpccReport report;
  report.benchmark_id = benchmark.id;
  report.model_id = model_id;
  report.threshold = threshold;

  std::vector<const Sample*> subset;
  if (subset_ids) {
    for (const std::string& id : *subset_ids) {
      const Sample* s = benchmark.find(id);
      if (!s) throw Error(ErrorCode::domain, "subset id not in benchmark", id);
      subset.push_back(s);
    }
  } else {
    for (const Sample& s : benchmark.samples) subset.push_back(&s);
  }

  double sum = 0.0;
  for (const Sample* s : subset) {
    const TokenTrace* original = traces.find(s->id, "original", model_id);
    std::vector<const TokenTrace*> perturbed =
        traces.find_prefix(s->id, "perturbed:", model_id);
    if (!original || perturbed.empty()) {
      ++report.skipped_samples;
      continue;
    }
    double ratio = dpcc_sample_ratio(*original, perturbed, scope);
    report.per_sample_ratio.emplace(s->id, ratio);
    sum += ratio;
    ++report.scored_samples;
    report.perturbations_per_sample =
        std::max(report.perturbations_per_sample, static_cast<int>(perturbed.size()));
  }
  if (report.scored_samples == 0) {
    throw Error(ErrorCode::domain, "no sample has both an original and a perturbed trace",
                benchmark.id);
  }
  report.benchmark_score = sum / static_cast<double>(report.scored_samples);
  report.flagged = report.benchmark_score > threshold;  // strict
  return report;
}

PerturbationResult generate_perturbations(const Sample& sample, int m, LlmClient& client,
                                          const RephraseProfile& profile,
                                          const std::string& model_id, int max_tokens) {
  if (m < 1) throw Error(ErrorCode::parameter, "perturbation count must be >= 1");
  PerturbationResult result;
  for (int i = 0; i < m; ++i) {
    std::string user = render_rephrase_user_prompt(profile, sample);
    user = substitute_placeholder(std::move(user), "index", std::to_string(i));
    ChatRequest req;
    req.model_id = model_id;
    req.system_prompt = profile.system_prompt;
    req.messages.push_back({Role::user, user});
    req.temperature = 0.0;
    req.max_tokens = max_tokens;

    std::optional<std::pair<std::string, std::string>> parsed;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {  // one retry
      ChatResponse resp = client.chat(req);
      parsed = parse_rephrase_reply(resp.text, profile);
    }
    if (!parsed) {
      ++result.parse_failures;
      continue;
    }
    Sample out;
    out.id = sample.id;
    out.instruction = sample.instruction;
    out.question = parsed->first;
    out.answer = parsed->second;
    out.tags["variant"] = "perturbed:" + std::to_string(i);
    result.samples.push_back(std::move(out));
  }
  if (result.samples.empty()) {
    throw Error(ErrorCode::domain,
                "every perturbation failed to parse for sample " + sample.id, sample.id);
  }
  return result;
}

CleanEvalProfile load_cleaneval_profile(const std::string& path) {
  SectionFile sections = load_section_file(path);
  CleanEvalProfile p;
  p.system_prompt = require_section(sections, "SYSTEM", path);
  p.user_template = require_section(sections, "USER_TEMPLATE", path);
  if (auto it = sections.find("QUESTION_MARKER"); it != sections.end()) {
    p.question_marker = it->second;
  }
  if (p.question_marker.empty()) {
    throw Error(ErrorCode::config, "cleaneval question marker must be non-empty", path);
  }
  if (p.user_template.find("{{question}}") == std::string::npos ||
      p.user_template.find("{{answer}}") == std::string::npos) {
    throw Error(ErrorCode::config,
                "cleaneval USER_TEMPLATE needs {{question}} and {{answer}}", path);
  }
  return p;
}

std::string render_eval_question(const Sample& sample, TaskKind kind) {
  if (kind == TaskKind::math_extract || !sample.choices) return sample.question;
  std::string out = sample.question;
  for (size_t i = 0; i < sample.choices->size(); ++i) {
    out += "\n";
    out += static_cast<char>('A' + i);
    out += ": ";
    out += (*sample.choices)[i];
  }
  return out;
}

namespace {

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

CleanEvalRephrased cleaneval_rephrase(const Benchmark& benchmark, LlmClient& client,
                                      const CleanEvalProfile& profile,
                                      const std::string& rephraser_model, int max_tokens,
                                      int workers) {
  CleanEvalRephrased out;
  out.benchmark.id = benchmark.id;
  out.benchmark.task_kind = benchmark.task_kind;

  std::vector<std::optional<Sample>> rephrased(benchmark.samples.size());
  parallel_for(benchmark.samples.size(), workers, [&](size_t i) {
    const Sample& s = benchmark.samples[i];
    ChatRequest req;
    req.model_id = rephraser_model;
    req.system_prompt = profile.system_prompt;
    std::string user = substitute_placeholder(
        profile.user_template, "question", render_eval_question(s, benchmark.task_kind));
    user = substitute_placeholder(std::move(user), "answer", s.answer);
    req.messages.push_back({Role::user, user});
    req.temperature = 0.0;
    req.max_tokens = max_tokens;

    for (int attempt = 0; attempt < 2; ++attempt) {  // one retry on parse failure
      ChatResponse resp = client.chat(req);
      size_t pos = resp.text.rfind(profile.question_marker);
      if (pos == std::string::npos) continue;
      std::string question =
          trim_copy(resp.text.substr(pos + profile.question_marker.size()));
      if (question.empty()) continue;
      Sample r = s;  // answers, choices and gold stay canonical for judging
      r.question = question;
      r.tags["variant"] = "rephrased";
      rephrased[i] = std::move(r);
      return;
    }
  });
  for (size_t i = 0; i < rephrased.size(); ++i) {
    if (rephrased[i]) {
      out.benchmark.samples.push_back(std::move(*rephrased[i]));
    } else {
      out.skipped_ids.push_back(benchmark.samples[i].id);
    }
  }
  return out;
}

namespace {

// Accuracy of the target model on one benchmark version. The rephrased
// variant's question already carries its options inline, so rendering is
// skipped for it.
double target_accuracy(const Benchmark& benchmark, LlmClient& client,
                       const CleanEvalOptions& options, bool render_options) {
  EvalOutputs outputs;
  std::vector<std::string> ids;
  std::mutex mu;
  ids.reserve(benchmark.samples.size());
  for (const Sample& s : benchmark.samples) ids.push_back(s.id);

  parallel_for(benchmark.samples.size(), options.workers, [&](size_t i) {
    const Sample& s = benchmark.samples[i];
    std::string question =
        render_options ? render_eval_question(s, benchmark.task_kind) : s.question;
    if (benchmark.task_kind == TaskKind::mc_perplexity) {
      std::vector<TokenTrace> traces;
      for (size_t c = 0; c < s.choices->size(); ++c) {
        TokenTrace t =
            client.score_text(options.target_model, question + "\n", (*s.choices)[c]);
        t.sample_id = s.id;
        t.variant = "choice:" + std::to_string(c);
        traces.push_back(std::move(t));
      }
      std::lock_guard<std::mutex> lock(mu);
      outputs.choice_traces.emplace(s.id, std::move(traces));
    } else {
      ChatRequest req;
      req.model_id = options.target_model;
      req.messages.push_back({Role::user, question});
      req.temperature = 0.0;
      req.max_tokens = options.generation_max_tokens;
      ChatResponse resp = client.chat(req);
      std::lock_guard<std::mutex> lock(mu);
      outputs.generations.emplace(s.id, resp.text);
    }
  });
  AccuracyReport report =
      evaluate(benchmark, ids, outputs, "all", options.scope, options.math_eps);
  return report.accuracy;
}

}  // namespace

CleanEvalReport cleaneval_run(const Benchmark& benchmark, LlmClient& client,
                              const CleanEvalProfile& profile,
                              const CleanEvalOptions& options) {
  if (options.rephraser_model.empty() || options.target_model.empty()) {
    throw Error(ErrorCode::config, "cleaneval needs rephraser_model and target_model");
  }
  CleanEvalRephrased rephrased = cleaneval_rephrase(
      benchmark, client, profile, options.rephraser_model, options.rephrase_max_tokens,
      options.workers);

  CleanEvalReport report;
  report.benchmark_id = benchmark.id;
  report.target_model = options.target_model;
  report.rephrase_parse_failures = rephrased.skipped_ids.size();
  report.evaluated = rephrased.benchmark.samples.size();
  if (rephrased.benchmark.samples.empty()) {
    throw Error(ErrorCode::domain, "every rephrase failed to parse", benchmark.id);
  }

  // Original accuracy over the same subset, so the gap compares like with like.
  Benchmark original_subset;
  original_subset.id = benchmark.id;
  original_subset.task_kind = benchmark.task_kind;
  for (const Sample& r : rephrased.benchmark.samples) {
    original_subset.samples.push_back(*benchmark.find(r.id));
  }

  report.accuracy_original =
      target_accuracy(original_subset, client, options, /*render_options=*/true);
  report.accuracy_rephrased =
      target_accuracy(rephrased.benchmark, client, options, /*render_options=*/false);
  report.gap = report.accuracy_original - report.accuracy_rephrased;
  return report;
}

nlohmann::json cleaneval_report_to_json(const CleanEvalReport& r) {
  return {{"benchmark_id", r.benchmark_id},
          {"target_model", r.target_model},
          {"evaluated", r.evaluated},
          {"rephrase_parse_failures", r.rephrase_parse_failures},
          {"accuracy_original", r.accuracy_original},
          {"accuracy_rephrased", r.accuracy_rephrased},
          {"gap", r.gap}};
}

}  // namespace contamkit
