#include "contamkit/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "contamkit/error.hpp"
#include "contamkit/textmetrics.hpp"

namespace contamkit {

RocReport roc(const LabeledScoreSet& scores, const std::vector<double>& fpr_targets) {
  if (scores.positives.empty() || scores.negatives.empty()) {
    throw Error(ErrorCode::parameter, "roc needs non-empty positives and negatives",
                scores.method_id);
  }
  for (const auto* side : {&scores.positives, &scores.negatives}) {
    for (const Score& s : *side) {
      if (!scores.method_id.empty() && s.method_id != scores.method_id) {
        throw Error(ErrorCode::invariant,
                    "score set mixes method ids (" + scores.method_id + " vs " +
                        s.method_id + ")",
                    s.sample_id);
      }
      if (!std::isfinite(s.value)) {
        throw Error(ErrorCode::invariant, "non-finite score value", s.sample_id);
      }
    }
  }

  std::vector<double> pos, neg;
  pos.reserve(scores.positives.size());
  neg.reserve(scores.negatives.size());
  for (const Score& s : scores.positives) pos.push_back(s.value);
  for (const Score& s : scores.negatives) neg.push_back(s.value);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());

  std::vector<double> thresholds;  // all distinct values, descending
  {
    std::vector<double> all;
    all.reserve(pos.size() + neg.size());
    all.insert(all.end(), pos.begin(), pos.end());
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end(), std::greater<>());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    thresholds = std::move(all);
  }

  RocReport report;
  report.method_id = scores.method_id;
  report.points.push_back({0.0, 0.0});  // threshold +infinity
  const double p_total = static_cast<double>(pos.size());
  const double n_total = static_cast<double>(neg.size());
  size_t ip = 0, in = 0;
  for (double t : thresholds) {
    while (ip < pos.size() && pos[ip] >= t) ++ip;
    while (in < neg.size() && neg[in] >= t) ++in;
    report.points.push_back({static_cast<double>(in) / n_total,
                             static_cast<double>(ip) / p_total});
  }

  double auc = 0.0;
  for (size_t i = 1; i < report.points.size(); ++i) {
    const RocPoint& a = report.points[i - 1];
    const RocPoint& b = report.points[i];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  report.auc = auc;

  for (double target : fpr_targets) {
    double best = 0.0;
    for (const RocPoint& p : report.points) {
      if (p.fpr <= target) best = std::max(best, p.tpr);
    }
    report.tpr_at[target] = best;
  }
  return report;
}

nlohmann::json roc_report_to_json(const RocReport& r) {
  nlohmann::json points = nlohmann::json::array();
  for (const RocPoint& p : r.points) points.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}});
  nlohmann::json tpr_at = nlohmann::json::object();
  for (const auto& [target, tpr] : r.tpr_at) {
    std::ostringstream key;
    key << target;
    tpr_at[key.str()] = tpr;
  }
  return {{"method_id", r.method_id}, {"label", r.label},   {"auc", r.auc},
          {"tpr_at", tpr_at},         {"points", points}};
}

RocReport roc_report_from_json(const nlohmann::json& j) {
  RocReport r;
  r.method_id = j.at("method_id").get<std::string>();
  r.label = j.value("label", "");
  r.auc = j.at("auc").get<double>();
  for (const auto& [key, value] : j.at("tpr_at").items()) {
    r.tpr_at[std::stod(key)] = value.get<double>();
  }
  if (j.contains("points")) {
    for (const auto& p : j["points"]) {
      r.points.push_back({p.at("fpr").get<double>(), p.at("tpr").get<double>()});
    }
  }
  return r;
}

bool judge_math(const Sample& sample, const std::string& generation, double eps) {
  auto got = extract_final_number(generation);
  auto want = extract_final_number(sample.answer);
  if (!want) {
    throw Error(ErrorCode::invariant, "gold answer contains no number", sample.id);
  }
  if (!got) return false;
  if (eps > 0.0) {
    return std::fabs(decimal_value(*got) - decimal_value(*want)) <= eps;
  }
  return *got == *want;
}

std::map<std::string, std::string> load_generations_jsonl(const std::string& path) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (path != "-") {
    file.open(path);
    if (!file) throw Error(ErrorCode::io, "cannot open generations file", path);
    in = &file;
  }
  std::map<std::string, std::string> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(*in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    std::string id;
    std::string text;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      id = j.at("sample_id").get<std::string>();
      text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse, std::string("bad generation record: ") + e.what(), where);
    }
    if (!out.emplace(std::move(id), std::move(text)).second) {
      throw Error(ErrorCode::parse, "duplicate sample_id in generations", where);
    }
  }
  return out;
}

void save_generations_jsonl(const std::map<std::string, std::string>& generations,
                            const std::string& path) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (path != "-") {
    file.open(path, std::ios::binary);
    if (!file) throw Error(ErrorCode::io, "cannot open generations file for writing", path);
    out = &file;
  }
  for (const auto& [id, text] : generations) {
    nlohmann::json j = {{"sample_id", id}, {"text", text}};
    *out << j.dump() << '\n';
  }
  if (!*out) throw Error(ErrorCode::io, "write failed", path);
}

namespace {

std::vector<bool> gold_flags(const Sample& sample) {
  if (!sample.choices || !sample.gold_index) {
    throw Error(ErrorCode::invariant, "multiple-choice judging needs choices and gold_index",
                sample.id);
  }
  std::vector<bool> flags(sample.choices->size(), false);
  flags[static_cast<size_t>(*sample.gold_index)] = true;
  auto it = sample.tags.find("gold_indices");
  if (it != sample.tags.end()) {
    std::istringstream in(it->second);
    std::string part;
    while (std::getline(in, part, ',')) {
      if (part.empty()) continue;
      size_t idx = 0;
      try {
        idx = static_cast<size_t>(std::stoul(part));
      } catch (...) {
        throw Error(ErrorCode::parse, "bad gold_indices tag '" + it->second + "'",
                    sample.id);
      }
      if (idx >= flags.size()) {
        throw Error(ErrorCode::invariant, "gold_indices entry out of range", sample.id);
      }
      flags[idx] = true;
    }
  }
  return flags;
}

}  // namespace

bool judge_mc_perplexity(const Sample& sample, const std::vector<TokenTrace>& choice_traces,
                         Scope scope) {
  std::vector<bool> flags = gold_flags(sample);
  if (choice_traces.size() != flags.size()) {
    throw Error(ErrorCode::invariant,
                "need one trace per choice: " + std::to_string(choice_traces.size()) +
                    " traces for " + std::to_string(flags.size()) + " choices",
                sample.id);
  }
  bool any_correct = false, any_incorrect = false;
  for (bool f : flags) (f ? any_correct : any_incorrect) = true;
  if (!any_correct || !any_incorrect) {
    throw Error(ErrorCode::invariant,
                "perplexity judging needs at least one correct and one incorrect choice",
                sample.id);
  }
  double best_correct = std::numeric_limits<double>::infinity();
  double best_incorrect = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < flags.size(); ++i) {
    double ppl = perplexity(choice_traces[i], scope);
    double& slot = flags[i] ? best_correct : best_incorrect;
    slot = std::min(slot, ppl);
  }
  return best_correct < best_incorrect;
}

bool judge_mc_generative(const Sample& sample, const std::string& generation) {
  if (!sample.choices || !sample.gold_index) {
    throw Error(ErrorCode::invariant, "multiple-choice judging needs choices and gold_index",
                sample.id);
  }
  TokenSeq gen = normalize_tokenize(generation);
  size_t best_idx = 0;
  double best = -1.0;
  for (size_t i = 0; i < sample.choices->size(); ++i) {
    double r = rouge_l_tokens(gen, normalize_tokenize((*sample.choices)[i]));
    if (r > best) {  // strict: ties keep the lowest index
      best = r;
      best_idx = i;
    }
  }
  return best_idx == static_cast<size_t>(*sample.gold_index);
}

nlohmann::json accuracy_report_to_json(const AccuracyReport& r) {
  return {{"benchmark_id", r.benchmark_id}, {"subset", r.subset}, {"total", r.total},
          {"correct", r.correct},           {"missing", r.missing},
          {"accuracy", r.accuracy}};
}

AccuracyReport evaluate(const Benchmark& benchmark,
                        const std::vector<std::string>& subset_ids,
                        const EvalOutputs& outputs, const std::string& subset_name,
                        Scope scope, double math_eps) {
  if (subset_ids.empty()) {
    throw Error(ErrorCode::domain, "empty evaluation subset", benchmark.id);
  }
  AccuracyReport report;
  report.benchmark_id = benchmark.id;
  report.subset = subset_name;
  report.total = subset_ids.size();
  for (const std::string& id : subset_ids) {
    const Sample* sample = benchmark.find(id);
    if (!sample) {
      throw Error(ErrorCode::domain, "subset id not in benchmark", id);
    }
    bool correct = false;
    switch (benchmark.task_kind) {
      case TaskKind::math_extract:
      case TaskKind::mc_generative: {
        auto it = outputs.generations.find(id);
        if (it == outputs.generations.end()) {
          ++report.missing;
          break;
        }
        correct = benchmark.task_kind == TaskKind::math_extract
                      ? judge_math(*sample, it->second, math_eps)
                      : judge_mc_generative(*sample, it->second);
        break;
      }
      case TaskKind::mc_perplexity: {
        auto it = outputs.choice_traces.find(id);
        if (it == outputs.choice_traces.end()) {
          ++report.missing;
          break;
        }
        correct = judge_mc_perplexity(*sample, it->second, scope);
        break;
      }
    }
    if (correct) ++report.correct;
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  return report;
}

std::vector<MethodSummary> summarize_rocs(const std::vector<RocReport>& reports) {
  std::vector<MethodSummary> out;
  for (const RocReport& r : reports) {
    MethodSummary* slot = nullptr;
    for (MethodSummary& s : out) {
      if (s.method_id == r.method_id) { slot = &s; break; }
    }
    if (!slot) {
      out.push_back({r.method_id, 0, 0.0, {}});
      slot = &out.back();
    }
    ++slot->runs;
    slot->mean_auc += r.auc;
    for (const auto& [target, tpr] : r.tpr_at) slot->mean_tpr_at[target] += tpr;
  }
  for (MethodSummary& s : out) {
    s.mean_auc /= static_cast<double>(s.runs);
    for (auto& [target, sum] : s.mean_tpr_at) sum /= static_cast<double>(s.runs);
  }
  std::sort(out.begin(), out.end(),
            [](const MethodSummary& a, const MethodSummary& b) {
              return a.method_id < b.method_id;
            });
  return out;
}

nlohmann::json summaries_to_json(const std::vector<MethodSummary>& summaries) {
  nlohmann::json methods = nlohmann::json::array();
  for (const MethodSummary& s : summaries) {
    nlohmann::json tpr_at = nlohmann::json::object();
    for (const auto& [target, tpr] : s.mean_tpr_at) {
      std::ostringstream key;
      key << target;
      tpr_at[key.str()] = tpr;
    }
    methods.push_back({{"method_id", s.method_id},
                       {"runs", s.runs},
                       {"mean_auc", s.mean_auc},
                       {"mean_tpr_at", tpr_at}});
  }
  return {{"methods", methods}};
}

std::string summaries_to_csv(const std::vector<MethodSummary>& summaries) {
  std::set<double> targets;
  for (const MethodSummary& s : summaries) {
    for (const auto& [target, tpr] : s.mean_tpr_at) targets.insert(target);
  }
  std::ostringstream out;
  out << "method_id,runs,mean_auc";
  for (double t : targets) out << ",tpr_at_" << t;
  out << '\n';
  for (const MethodSummary& s : summaries) {
    out << s.method_id << ',' << s.runs << ',' << s.mean_auc;
    for (double t : targets) {
      auto it = s.mean_tpr_at.find(t);
      out << ',';
      if (it != s.mean_tpr_at.end()) out << it->second;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace contamkit
