#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "cli_support.hpp"
#include "contamkit/corpus.hpp"
#include "contamkit/detect_oracle.hpp"
#include "contamkit/eal.hpp"
#include "contamkit/error.hpp"

namespace contamkit::cli {
namespace {

// ------------------------------------------------------------------- mix

struct MixOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string background;
  std::string mode = "open";
  std::string contaminant;
  std::string out;
  std::string manifest_out;
  double fraction = 0.0;
  int repeats = 0;
  uint64_t total = 0;
  CLI::Option* o_fraction = nullptr;
  CLI::Option* o_repeats = nullptr;
  CLI::Option* o_total = nullptr;
};

void run_mix(const MixOpts& o) {
  Config cfg = o.common.resolve();
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  Corpus background = load_corpus_jsonl(o.background);

  MixturePlan plan;
  plan.benchmark_id = bench.id;
  plan.mode = mixture_mode_from_string(o.mode);
  plan.fraction =
      (o.o_fraction != nullptr && o.o_fraction->count() > 0) ? o.fraction : cfg.fraction;
  plan.repeats =
      (o.o_repeats != nullptr && o.o_repeats->count() > 0) ? o.repeats : cfg.repeats;
  plan.total_size =
      (o.o_total != nullptr && o.o_total->count() > 0) ? o.total : cfg.total_size;
  plan.seed = cfg.seed;

  std::vector<Sample> contaminant;
  if (plan.mode == MixtureMode::open) {
    contaminant = bench.samples;
  } else {
    if (o.contaminant.empty()) {
      throw Error(ErrorCode::parameter,
                  "evasive mode needs --contaminant (rephrased samples JSONL)");
    }
    contaminant = load_samples_jsonl(o.contaminant, /*benchmark_grade=*/true);
  }

  MixtureResult result = build_mixture(plan, bench, contaminant, background);
  save_samples_jsonl(result.entries, o.out);
  save_manifest(result.manifest, o.manifest_out);
  std::cerr << "mixture: " << result.manifest.contaminated_entries << " contaminated + "
            << result.manifest.background_entries << " background = "
            << result.entries.size() << " entries (" << result.manifest.dropped_ids.size()
            << " dropped)\n";
}

void add_mix(CLI::App& parent, const std::string& description) {
  auto o = std::make_shared<MixOpts>();
  CLI::App* cmd = parent.add_subcommand("mix", description);
  o->common.attach_config(*cmd);
  o->common.attach_seed(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--background", o->background, "Background corpus JSONL")->required();
  cmd->add_option("--mode", o->mode, "open (verbatim) or evasive (rephrased)");
  cmd->add_option("--contaminant", o->contaminant,
                  "Rephrased samples JSONL (evasive mode)");
  o->o_fraction =
      cmd->add_option("--fraction", o->fraction, "Benchmark fraction to contaminate");
  o->o_repeats =
      cmd->add_option("--repeats", o->repeats, "Occurrences per contaminated sample");
  o->o_total = cmd->add_option("--total", o->total, "Total mixture entries");
  cmd->add_option("--out", o->out, "Mixture JSONL")->required();
  cmd->add_option("--manifest", o->manifest_out, "Manifest JSON")->required();
  cmd->callback([o] { run_mix(*o); });
}

// ------------------------------------------------------------- rephrase

struct RephraseOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string profile;
  std::string out;
  std::string records_out;
};

void run_rephrase(const RephraseOpts& o) {
  Config cfg = o.common.resolve();
  std::string profile_path = o.profile.empty() ? cfg.rephrase_profile : o.profile;
  if (profile_path.empty()) {
    throw Error(ErrorCode::config, "rephrase profile not set (use --profile)");
  }
  if (cfg.rephraser_model.empty()) {
    throw Error(ErrorCode::config, "rephrasing needs --rephraser-model");
  }
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  RephraseProfile profile = load_rephrase_profile(profile_path);
  LlmClient client = make_client(cfg);

  std::vector<RephraseOutcome> outcomes(bench.samples.size());
  parallel_for(bench.samples.size(), cfg.workers, [&](size_t i) {
    outcomes[i] = rephrase_once(bench.samples[i], profile, client, cfg.rephraser_model,
                                cfg.max_tokens);
  });

  std::vector<Sample> rephrased;
  size_t failures = 0;
  for (size_t i = 0; i < bench.samples.size(); ++i) {
    if (outcomes[i].parsed) {
      rephrased.push_back(make_rephrased_sample(bench.samples[i], outcomes[i].question,
                                                outcomes[i].answer));
    } else {
      ++failures;
    }
  }
  save_samples_jsonl(rephrased, o.out);
  if (!o.records_out.empty()) {
    std::ofstream file(o.records_out, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", o.records_out);
    for (size_t i = 0; i < bench.samples.size(); ++i) {
      nlohmann::json j = {{"source_sample_id", bench.samples[i].id},
                          {"parsed", outcomes[i].parsed},
                          {"question", outcomes[i].question},
                          {"answer", outcomes[i].answer},
                          {"raw_reply", outcomes[i].raw_reply}};
      file << j.dump() << '\n';
    }
    if (!file) throw Error(ErrorCode::io, "write failed", o.records_out);
  }
  std::cerr << "rephrased " << rephrased.size() << "/" << bench.samples.size()
            << " samples (" << failures << " parse failures)\n";
}

void add_rephrase(CLI::App& parent) {
  auto o = std::make_shared<RephraseOpts>();
  CLI::App* cmd = parent.add_subcommand(
      "rephrase", "Single-pass benchmark rephrasing via the rephraser model");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--profile", o->profile, "Rephrase prompt profile");
  cmd->add_option("--out", o->out, "Rephrased samples JSONL")->required();
  cmd->add_option("--records", o->records_out, "Raw outcome records JSONL");
  cmd->callback([o] { run_rephrase(*o); });
}

// --------------------------------------------------------------- harden

struct HardenOpts {
  CommonFlags common;
  std::string bench;
  std::string task_kind = "math_extract";
  std::string benchmark_id;
  std::string profile;
  std::string index;
  std::string out;
  std::string records_out;
  int max_iters = 3;
};

void run_harden(const HardenOpts& o) {
  Config cfg = o.common.resolve();
  std::string profile_path = o.profile.empty() ? cfg.rephrase_profile : o.profile;
  if (profile_path.empty()) {
    throw Error(ErrorCode::config, "rephrase profile not set (use --profile)");
  }
  if (cfg.rephraser_model.empty()) {
    throw Error(ErrorCode::config, "hardening needs --rephraser-model");
  }
  Benchmark bench = load_benchmark_jsonl(o.bench, task_kind_from_string(o.task_kind),
                                         o.benchmark_id);
  RephraseProfile profile = load_rephrase_profile(profile_path);
  NgramIndex index = load_index(o.index);
  LlmClient client = make_client(cfg);

  std::vector<Detector> detectors;
  detectors.push_back(
      {"ngram", [&index](const Sample& cand) { return scan_sample(index, cand).flagged; }});

  std::vector<RephraseRecord> records(bench.samples.size());
  parallel_for(bench.samples.size(), cfg.workers, [&](size_t i) {
    records[i] = oracle_harden(bench.samples[i], profile, client, cfg.rephraser_model,
                               detectors, o.max_iters, cfg.max_tokens);
  });

  std::vector<Sample> accepted = filter_flagged(records, bench);
  save_samples_jsonl(accepted, o.out);
  if (!o.records_out.empty()) {
    std::ofstream file(o.records_out, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open file for writing", o.records_out);
    for (const RephraseRecord& r : records) {
      file << rephrase_record_to_json(r).dump() << '\n';
    }
    if (!file) throw Error(ErrorCode::io, "write failed", o.records_out);
  }
  size_t detected = 0;
  size_t parse_failures = 0;
  for (const RephraseRecord& r : records) {
    if (r.final_status == RephraseStatus::dropped_detected) ++detected;
    if (r.final_status == RephraseStatus::dropped_parse_failure) ++parse_failures;
  }
  std::cerr << "hardened: " << accepted.size() << " accepted, " << detected
            << " dropped (still detected), " << parse_failures
            << " dropped (parse failure)\n";
}

void add_harden(CLI::App& parent) {
  auto o = std::make_shared<HardenOpts>();
  CLI::App* cmd = parent.add_subcommand(
      "harden", "Iterative rephrasing against the n-gram oracle detector");
  o->common.attach_config(*cmd);
  o->common.attach_endpoint(*cmd);
  o->common.attach_workers(*cmd);
  cmd->add_option("--bench", o->bench, "Benchmark JSONL")->required();
  cmd->add_option("--task-kind", o->task_kind,
                  "math_extract, mc_perplexity or mc_generative");
  cmd->add_option("--benchmark-id", o->benchmark_id, "Override the benchmark id");
  cmd->add_option("--profile", o->profile, "Rephrase prompt profile");
  cmd->add_option("--index", o->index, "N-gram index simulating the provider's scanner")
      ->required();
  cmd->add_option("--max-iters", o->max_iters, "Rephrase attempts per sample");
  cmd->add_option("--out", o->out, "Accepted rephrased samples JSONL")->required();
  cmd->add_option("--records", o->records_out, "Full hardening records JSONL");
  cmd->callback([o] { run_harden(*o); });
}

}  // namespace

void register_eal_commands(CLI::App& app) {
  add_mix(app, "Assemble a contaminated finetuning mixture (open or evasive)");
  CLI::App* eal = app.add_subcommand(
      "eal", "Evasive augmentation pipeline: rephrase, harden, mix");
  eal->require_subcommand(1);
  add_rephrase(*eal);
  add_harden(*eal);
  add_mix(*eal, "Alias of the top-level mix subcommand");
}

}  // namespace contamkit::cli
