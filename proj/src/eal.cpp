#include "contamkit/eal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "contamkit/error.hpp"
#include "contamkit/rng.hpp"

namespace contamkit {

RephraseProfile load_rephrase_profile(const std::string& path) {
  SectionFile sections = load_section_file(path);
  RephraseProfile p;
  p.system_prompt = require_section(sections, "SYSTEM", path);
  p.user_template = require_section(sections, "USER_TEMPLATE", path);
  if (auto it = sections.find("FOLLOWUP"); it != sections.end()) {
    p.followup_user_prompt = it->second;
  }
  if (auto it = sections.find("QUESTION_MARKER"); it != sections.end()) {
    p.question_marker = it->second;
  }
  if (auto it = sections.find("ANSWER_MARKER"); it != sections.end()) {
    p.answer_marker = it->second;
  }
  if (auto it = sections.find("BENCHMARK_ID"); it != sections.end()) {
    p.benchmark_id = it->second;
  } else {
    size_t slash = path.find_last_of("/\\");
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = name.find_last_of('.');
    p.benchmark_id = dot == std::string::npos || dot == 0 ? name : name.substr(0, dot);
  }
  if (p.question_marker.empty() || p.answer_marker.empty()) {
    throw Error(ErrorCode::config, "rephrase markers must be non-empty", path);
  }
  if (p.user_template.find("{{question}}") == std::string::npos ||
      p.user_template.find("{{answer}}") == std::string::npos) {
    throw Error(ErrorCode::config,
                "rephrase USER_TEMPLATE needs {{question}} and {{answer}}", path);
  }
  return p;
}

std::string render_rephrase_user_prompt(const RephraseProfile& profile, const Sample& s) {
  std::string out = substitute_placeholder(profile.user_template, "question", s.question);
  return substitute_placeholder(std::move(out), "answer", s.answer);
}

namespace {

std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::optional<std::pair<std::string, std::string>> parse_rephrase_reply(
    const std::string& reply, const RephraseProfile& profile) {
  size_t q_pos = reply.rfind(profile.question_marker);
  if (q_pos == std::string::npos) return std::nullopt;
  size_t q_begin = q_pos + profile.question_marker.size();
  size_t a_pos = reply.find(profile.answer_marker, q_begin);
  if (a_pos == std::string::npos) return std::nullopt;
  std::string question = trim(std::string_view(reply).substr(q_begin, a_pos - q_begin));
  std::string answer = trim(std::string_view(reply).substr(a_pos + profile.answer_marker.size()));
  if (question.empty() || answer.empty()) return std::nullopt;
  return std::make_pair(std::move(question), std::move(answer));
}

namespace {

ChatRequest build_rephrase_request(const RephraseProfile& profile,
                                   const std::vector<ChatMessage>& conversation,
                                   const std::string& model_id, int max_tokens) {
  ChatRequest req;
  req.model_id = model_id;
  req.system_prompt = profile.system_prompt;
  req.messages = conversation;
  req.temperature = 0.0;
  req.max_tokens = max_tokens;
  return req;
}

}  // namespace

RephraseOutcome rephrase_once(const Sample& sample, const RephraseProfile& profile,
                              LlmClient& client, const std::string& model_id,
                              int max_tokens) {
  std::vector<ChatMessage> conversation{
      {Role::user, render_rephrase_user_prompt(profile, sample)}};
  RephraseOutcome outcome;
  for (int attempt = 0; attempt < 2; ++attempt) {  // one retry on parse failure
    ChatResponse resp =
        client.chat(build_rephrase_request(profile, conversation, model_id, max_tokens));
    outcome.raw_reply = resp.text;
    if (auto parsed = parse_rephrase_reply(resp.text, profile)) {
      outcome.parsed = true;
      outcome.question = parsed->first;
      outcome.answer = parsed->second;
      return outcome;
    }
  }
  return outcome;
}

Sample make_rephrased_sample(const Sample& source, const std::string& question,
                             const std::string& answer) {
  Sample out;
  out.id = source.id;
  out.instruction = source.instruction;
  out.question = question;
  out.answer = answer;
  if (source.choices) {
    // Incorrect options pass through untouched; the gold slot carries the
    // rephrased answer.
    out.choices = source.choices;
    out.gold_index = source.gold_index;
    (*out.choices)[static_cast<size_t>(*source.gold_index)] = answer;
  }
  out.tags["variant"] = "rephrased";
  return out;
}

std::string to_string(RephraseStatus s) {
  switch (s) {
    case RephraseStatus::accepted: return "accepted";
    case RephraseStatus::dropped_detected: return "dropped_detected";
    case RephraseStatus::dropped_parse_failure: return "dropped_parse_failure";
  }
  return "unknown";
}

nlohmann::json rephrase_record_to_json(const RephraseRecord& r) {
  nlohmann::json iterations = nlohmann::json::array();
  for (const RephraseIteration& it : r.iterations) {
    iterations.push_back({{"question", it.question},
                          {"answer", it.answer},
                          {"raw_reply", it.raw_reply}});
  }
  nlohmann::json conversation = nlohmann::json::array();
  for (const ChatMessage& m : r.conversation) {
    conversation.push_back({{"role", to_string(m.role)}, {"text", m.text}});
  }
  return {{"source_sample_id", r.source_sample_id},
          {"final_status", to_string(r.final_status)},
          {"detectors_evaded", r.detectors_evaded},
          {"iterations", iterations},
          {"conversation", conversation}};
}

RephraseRecord oracle_harden(const Sample& sample, const RephraseProfile& profile,
                             LlmClient& client, const std::string& model_id,
                             const std::vector<Detector>& detectors, int max_iters,
                             int max_tokens) {
  if (max_iters < 1) {
    throw Error(ErrorCode::parameter, "max_iters must be >= 1");
  }
  if (max_iters > 1 && profile.followup_user_prompt.empty()) {
    throw Error(ErrorCode::config,
                "hardening beyond one round needs a FOLLOWUP prompt",
                profile.benchmark_id);
  }
  RephraseRecord record;
  record.source_sample_id = sample.id;
  std::vector<ChatMessage> conversation{
      {Role::user, render_rephrase_user_prompt(profile, sample)}};

  for (int iter = 0; iter < max_iters; ++iter) {
    if (iter > 0) {
      conversation.push_back({Role::user, profile.followup_user_prompt});
    }
    std::optional<std::pair<std::string, std::string>> parsed;
    std::string raw;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
      ChatResponse resp =
          client.chat(build_rephrase_request(profile, conversation, model_id, max_tokens));
      raw = resp.text;
      parsed = parse_rephrase_reply(resp.text, profile);
    }
    conversation.push_back({Role::assistant, raw});
    if (!parsed) {
      record.iterations.push_back({"", "", raw});
      record.final_status = RephraseStatus::dropped_parse_failure;
      record.conversation = std::move(conversation);
      return record;
    }
    record.iterations.push_back({parsed->first, parsed->second, raw});
    Sample candidate = make_rephrased_sample(sample, parsed->first, parsed->second);
    std::vector<std::string> evaded;
    bool any_flagged = false;
    for (const Detector& d : detectors) {
      if (d.flagged(candidate)) {
        any_flagged = true;
      } else {
        evaded.push_back(d.method_id);
      }
    }
    if (!any_flagged) {
      record.final_status = RephraseStatus::accepted;
      record.detectors_evaded = std::move(evaded);
      record.conversation = std::move(conversation);
      return record;
    }
    record.final_status = RephraseStatus::dropped_detected;
  }
  record.conversation = std::move(conversation);
  return record;
}

std::vector<Sample> filter_flagged(const std::vector<RephraseRecord>& records,
                                   const Benchmark& source) {
  std::vector<Sample> out;
  for (const RephraseRecord& r : records) {
    if (r.final_status != RephraseStatus::accepted) continue;
    if (r.iterations.empty()) {
      throw Error(ErrorCode::invariant, "accepted record without iterations",
                  r.source_sample_id);
    }
    const Sample* src = source.find(r.source_sample_id);
    if (!src) {
      throw Error(ErrorCode::invariant, "record references unknown source sample",
                  r.source_sample_id);
    }
    const RephraseIteration& last = r.iterations.back();
    out.push_back(make_rephrased_sample(*src, last.question, last.answer));
  }
  return out;
}

std::string to_string(MixtureMode m) {
  return m == MixtureMode::open ? "open" : "evasive";
}

MixtureMode mixture_mode_from_string(std::string_view s) {
  if (s == "open") return MixtureMode::open;
  if (s == "evasive") return MixtureMode::evasive;
  throw Error(ErrorCode::parameter, "unknown mode '" + std::string(s) +
                                        "' (expected open or evasive)");
}

void validate_plan(const MixturePlan& plan, size_t benchmark_size) {
  if (!(plan.fraction > 0.0) || plan.fraction > 1.0) {
    throw Error(ErrorCode::parameter,
                "fraction must lie in (0, 1], got " + std::to_string(plan.fraction));
  }
  if (plan.repeats < 1) {
    throw Error(ErrorCode::parameter, "repeats must be >= 1");
  }
  if (plan.total_size < 1) {
    throw Error(ErrorCode::parameter, "total_size must be >= 1");
  }
  uint64_t selected = static_cast<uint64_t>(
      std::ceil(plan.fraction * static_cast<double>(benchmark_size)));
  if (selected * static_cast<uint64_t>(plan.repeats) > plan.total_size) {
    throw Error(ErrorCode::parameter,
                "plan infeasible: ceil(fraction*benchmark) * repeats = " +
                    std::to_string(selected * static_cast<uint64_t>(plan.repeats)) +
                    " exceeds total_size " + std::to_string(plan.total_size));
  }
}

nlohmann::json manifest_to_json(const MixtureManifest& m) {
  return {{"benchmark_id", m.plan.benchmark_id},
          {"mode", to_string(m.plan.mode)},
          {"fraction", m.plan.fraction},
          {"repeats", m.plan.repeats},
          {"total_size", m.plan.total_size},
          {"seed", m.plan.seed},
          {"selected_ids", m.selected_ids},
          {"dropped_ids", m.dropped_ids},
          {"contaminated_entries", m.contaminated_entries},
          {"background_entries", m.background_entries},
          {"background_source", m.background_source}};
}

MixtureManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest", path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad manifest JSON: ") + e.what(), path);
  }
  MixtureManifest m;
  try {
    m.plan.benchmark_id = j.at("benchmark_id").get<std::string>();
    m.plan.mode = mixture_mode_from_string(j.at("mode").get<std::string>());
    m.plan.fraction = j.at("fraction").get<double>();
    m.plan.repeats = j.at("repeats").get<int>();
    m.plan.total_size = j.at("total_size").get<uint64_t>();
    m.plan.seed = j.at("seed").get<uint64_t>();
    m.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
    m.dropped_ids = j.at("dropped_ids").get<std::vector<std::string>>();
    m.contaminated_entries = j.at("contaminated_entries").get<uint64_t>();
    m.background_entries = j.at("background_entries").get<uint64_t>();
    m.background_source = j.value("background_source", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad manifest shape: ") + e.what(), path);
  }
  return m;
}

void save_manifest(const MixtureManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open manifest for writing", path);
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed", path);
}

MixtureResult build_mixture(const MixturePlan& plan, const Benchmark& benchmark,
                            const std::vector<Sample>& contaminant,
                            const Corpus& background) {
  validate_plan(plan, benchmark.samples.size());
  const size_t selected_count = static_cast<size_t>(
      std::ceil(plan.fraction * static_cast<double>(benchmark.samples.size())));

  std::unordered_map<std::string, const Sample*> by_id;
  for (const Sample& s : contaminant) by_id.emplace(s.id, &s);

  Rng rng(plan.seed);

  // Draw 1: benchmark selection — first RNG consumption in both modes, so
  // equal seeds select equal id sets regardless of mode.
  std::vector<size_t> sel = sample_without_replacement(benchmark.samples.size(),
                                                       selected_count, rng);
  std::sort(sel.begin(), sel.end());

  MixtureResult result;
  result.manifest.plan = plan;
  result.manifest.background_source = background.source_uri;

  for (size_t idx : sel) {
    const Sample& src = benchmark.samples[idx];
    result.manifest.selected_ids.push_back(src.id);
    auto it = by_id.find(src.id);
    if (it == by_id.end()) {
      result.manifest.dropped_ids.push_back(src.id);  // hardened away
      continue;
    }
    for (int r = 0; r < plan.repeats; ++r) {
      Sample entry;
      entry.id = "c:" + src.id + "#" + std::to_string(r);
      entry.answer = format_alpaca(*it->second);
      entry.tags["origin"] = "contaminated";
      entry.tags["source_id"] = src.id;
      entry.tags["repeat_index"] = std::to_string(r);
      result.entries.push_back(std::move(entry));
    }
  }
  result.manifest.contaminated_entries = result.entries.size();

  if (plan.total_size < result.entries.size()) {
    throw Error(ErrorCode::invariant, "contaminated entries exceed total_size");
  }
  const size_t fill = static_cast<size_t>(plan.total_size) - result.entries.size();
  if (fill > background.documents.size()) {
    throw Error(ErrorCode::parameter,
                "background corpus too small: need " + std::to_string(fill) + " of " +
                    std::to_string(background.documents.size()) + " documents",
                background.source_uri);
  }

  // Draw 2: background fill.
  std::vector<size_t> bg = sample_without_replacement(background.documents.size(), fill, rng);
  for (size_t idx : bg) {
    const Sample& doc = background.documents[idx];
    Sample entry;
    entry.id = "b:" + doc.id;
    entry.answer = format_alpaca(doc);
    entry.tags["origin"] = "background";
    entry.tags["source_id"] = doc.id;
    result.entries.push_back(std::move(entry));
  }
  result.manifest.background_entries = fill;

  // Draw 3: final shuffle.
  shuffle(result.entries, rng);
  return result;
}

}  // namespace contamkit
