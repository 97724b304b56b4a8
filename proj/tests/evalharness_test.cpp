// Evaluation harness: ROC curves against a brute-force oracle, answer
// judges, accuracy evaluation, and report serialization.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/corpus.hpp"
#include "contamkit/error.hpp"
#include "contamkit/evalharness.hpp"
#include "contamkit/trace.hpp"
#include "test_util.hpp"

using namespace contamkit;

namespace {

struct OraclePoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct OracleRoc {
  std::vector<OraclePoint> points;
  double auc = 0.0;
};

// Independent ROC construction: enumerate thresholds (+infinity plus every
// distinct score, descending), count sides with >= comparisons, trapezoid.
OracleRoc roc_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::set<double, std::greater<>> distinct(pos.begin(), pos.end());
  distinct.insert(neg.begin(), neg.end());

  OracleRoc out;
  out.points.push_back({0.0, 0.0});
  for (double t : distinct) {
    auto frac_at_least = [t](const std::vector<double>& v) {
      size_t n = 0;
      for (double x : v)
        if (x >= t) ++n;
      return static_cast<double>(n) / static_cast<double>(v.size());
    };
    out.points.push_back({frac_at_least(neg), frac_at_least(pos)});
  }
  for (size_t i = 1; i < out.points.size(); ++i) {
    out.auc += (out.points[i].fpr - out.points[i - 1].fpr) *
               (out.points[i].tpr + out.points[i - 1].tpr) / 2.0;
  }
  return out;
}

double oracle_tpr_at(const OracleRoc& r, double fpr_target) {
  double best = 0.0;
  for (const OraclePoint& p : r.points) {
    if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
  }
  return best;
}

LabeledScoreSet make_set(const std::vector<double>& pos, const std::vector<double>& neg,
                         const std::string& method = "yeom") {
  LabeledScoreSet s;
  s.method_id = method;
  int i = 0;
  for (double v : pos) s.positives.push_back({method, "p" + std::to_string(i++), v});
  i = 0;
  for (double v : neg) s.negatives.push_back({method, "n" + std::to_string(i++), v});
  return s;
}

Sample math_sample(const std::string& answer) {
  Sample s;
  s.id = "m1";
  s.question = "how many";
  s.answer = answer;
  return s;
}

Sample mc_sample(std::vector<std::string> choices, int gold) {
  Sample s;
  s.id = "c1";
  s.question = "pick one";
  s.choices = std::move(choices);
  s.gold_index = gold;
  s.answer = (*s.choices)[static_cast<size_t>(gold)];
  return s;
}

TokenTrace choice_trace(double logprob_each, size_t len) {
  TokenTrace t;
  t.sample_id = "c1";
  t.model_id = "m";
  t.variant = "choice";
  t.tokens.resize(len, "w");
  t.logprobs.resize(len, logprob_each);
  t.answer_start = 0;
  return t;
}

}  // namespace

TEST_CASE("roc matches brute-force oracle on random score sets with ties") {
  std::mt19937_64 rng(20240817);
  std::uniform_int_distribution<int> size_dist(1, 40);
  std::uniform_int_distribution<int> grid(-6, 6);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);

  for (int iter = 0; iter < 120; ++iter) {
    bool tie_heavy = iter % 2 == 0;
    std::vector<double> pos(static_cast<size_t>(size_dist(rng)));
    std::vector<double> neg(static_cast<size_t>(size_dist(rng)));
    for (double& v : pos) v = tie_heavy ? grid(rng) / 2.0 : unif(rng);
    for (double& v : neg) v = tie_heavy ? grid(rng) / 2.0 : unif(rng);

    OracleRoc want = roc_oracle(pos, neg);
    RocReport got = roc(make_set(pos, neg), default_fpr_targets());

    REQUIRE(got.points.size() == want.points.size());
    for (size_t i = 0; i < want.points.size(); ++i) {
      CHECK(got.points[i].fpr == doctest::Approx(want.points[i].fpr).epsilon(1e-12));
      CHECK(got.points[i].tpr == doctest::Approx(want.points[i].tpr).epsilon(1e-12));
    }
    CHECK(got.auc == doctest::Approx(want.auc).epsilon(1e-12));
    for (double target : default_fpr_targets()) {
      CHECK(got.tpr_at.at(target) ==
            doctest::Approx(oracle_tpr_at(want, target)).epsilon(1e-12));
    }
  }
}

TEST_CASE("roc anchors: perfect separation and hand-checked staircase") {
  RocReport perfect = roc(make_set({2.0, 3.0}, {0.0, 1.0}), {0.01});
  CHECK(perfect.auc == doctest::Approx(1.0));
  CHECK(perfect.tpr_at.at(0.01) == doctest::Approx(1.0));

  RocReport inverted = roc(make_set({0.0, 1.0}, {2.0, 3.0}), {0.01});
  CHECK(inverted.auc == doctest::Approx(0.0));
  CHECK(inverted.tpr_at.at(0.01) == doctest::Approx(0.0));

  // pos {1, 3}, neg {2}: thresholds +inf,3,2,1 give (0,0),(0,.5),(1,.5),(1,1).
  RocReport mid = roc(make_set({1.0, 3.0}, {2.0}), {0.5});
  REQUIRE(mid.points.size() == 4);
  CHECK(mid.points[1].fpr == doctest::Approx(0.0));
  CHECK(mid.points[1].tpr == doctest::Approx(0.5));
  CHECK(mid.points[2].fpr == doctest::Approx(1.0));
  CHECK(mid.points[2].tpr == doctest::Approx(0.5));
  CHECK(mid.auc == doctest::Approx(0.5));
  CHECK(mid.tpr_at.at(0.5) == doctest::Approx(0.5));
}

TEST_CASE("roc degenerates to the chance diagonal when every score ties") {
  RocReport r = roc(make_set({1.0, 1.0, 1.0}, {1.0, 1.0}), {0.01, 0.05, 0.1});
  REQUIRE(r.points.size() == 2);
  CHECK(r.points[0].fpr == 0.0);
  CHECK(r.points[0].tpr == 0.0);
  CHECK(r.points[1].fpr == 1.0);
  CHECK(r.points[1].tpr == 1.0);
  CHECK(r.auc == doctest::Approx(0.5));
  CHECK(r.tpr_at.at(0.01) == 0.0);
  CHECK(r.tpr_at.at(0.1) == 0.0);
}

TEST_CASE("roc validates its inputs") {
  CHECK_THROWS_AS(roc(make_set({}, {1.0}), {0.01}), Error);
  CHECK_THROWS_AS(roc(make_set({1.0}, {}), {0.01}), Error);

  LabeledScoreSet mixed = make_set({1.0}, {0.0});
  mixed.positives[0].method_id = "min_k";
  CHECK_THROWS_AS(roc(mixed, {0.01}), Error);

  LabeledScoreSet inf_score = make_set({1.0}, {0.0});
  inf_score.negatives[0].value = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(roc(inf_score, {0.01}), Error);

  LabeledScoreSet nan_score = make_set({1.0}, {0.0});
  nan_score.positives[0].value = std::nan("");
  CHECK_THROWS_AS(roc(nan_score, {0.01}), Error);
}

TEST_CASE("roc report JSON round trip preserves points and operating points") {
  RocReport r = roc(make_set({1.0, 3.0, 2.5}, {0.5, 2.0}), default_fpr_targets());
  r.label = "gsm8k/open";
  nlohmann::json j = roc_report_to_json(r);
  RocReport back = roc_report_from_json(j);
  CHECK(back.method_id == r.method_id);
  CHECK(back.label == r.label);
  CHECK(back.auc == r.auc);
  REQUIRE(back.points.size() == r.points.size());
  for (size_t i = 0; i < r.points.size(); ++i) {
    CHECK(back.points[i].fpr == r.points[i].fpr);
    CHECK(back.points[i].tpr == r.points[i].tpr);
  }
  REQUIRE(back.tpr_at.size() == r.tpr_at.size());
  for (const auto& [k, v] : r.tpr_at) {
    CHECK(back.tpr_at.at(k) == v);
  }
}

TEST_CASE("judge_math compares the final numbers") {
  Sample s = math_sample("So the answer is 42.");
  CHECK(judge_math(s, "I computed 41 + 1 = 42", 0.0));
  CHECK(judge_math(s, "the total is 42", 0.0));
  CHECK_FALSE(judge_math(s, "the total is 43", 0.0));
  CHECK_FALSE(judge_math(s, "no number here", 0.0));

  // Normalized string equality: 42.0 == 42 after canonical formatting.
  CHECK(judge_math(s, "answer: 42.0", 0.0));

  // Epsilon comparison on decimal values.
  Sample half = math_sample("exactly 0.5");
  CHECK_FALSE(judge_math(half, "roughly 0.4999", 0.0));
  CHECK(judge_math(half, "roughly 0.4999", 1e-3));
  CHECK_FALSE(judge_math(half, "roughly 0.4", 1e-3));

  Sample no_number = math_sample("there is no number");
  CHECK_THROWS_AS(judge_math(no_number, "42", 0.0), Error);
}

TEST_CASE("judge_mc_perplexity needs the gold choice strictly ahead") {
  Sample s = mc_sample({"aa bb", "cc dd", "ee ff"}, 1);

  // Gold choice (index 1) has the lowest perplexity.
  std::vector<TokenTrace> good = {choice_trace(-2.0, 2), choice_trace(-1.0, 2),
                                  choice_trace(-3.0, 2)};
  CHECK(judge_mc_perplexity(s, good, Scope::full));

  // A distractor wins.
  std::vector<TokenTrace> bad = {choice_trace(-1.0, 2), choice_trace(-2.0, 2),
                                 choice_trace(-3.0, 2)};
  CHECK_FALSE(judge_mc_perplexity(s, bad, Scope::full));

  // Exact tie between gold and best distractor counts as incorrect.
  std::vector<TokenTrace> tie = {choice_trace(-1.0, 2), choice_trace(-1.0, 2),
                                 choice_trace(-3.0, 2)};
  CHECK_FALSE(judge_mc_perplexity(s, tie, Scope::full));

  // Trace count must match choice count.
  std::vector<TokenTrace> short_set = {choice_trace(-1.0, 2), choice_trace(-2.0, 2)};
  CHECK_THROWS_AS(judge_mc_perplexity(s, short_set, Scope::full), Error);
}

TEST_CASE("judge_mc_perplexity honors multi-gold tags") {
  Sample s = mc_sample({"aa", "bb", "cc"}, 0);
  s.tags["gold_indices"] = "0,2";

  // Choice 2 (also gold) beats choice 1 (the only distractor).
  std::vector<TokenTrace> traces = {choice_trace(-3.0, 1), choice_trace(-2.0, 1),
                                    choice_trace(-1.0, 1)};
  CHECK(judge_mc_perplexity(s, traces, Scope::full));

  Sample all_gold = mc_sample({"aa", "bb"}, 0);
  all_gold.tags["gold_indices"] = "0,1";
  std::vector<TokenTrace> two = {choice_trace(-1.0, 1), choice_trace(-2.0, 1)};
  CHECK_THROWS_AS(judge_mc_perplexity(all_gold, two, Scope::full), Error);

  Sample out_of_range = mc_sample({"aa", "bb"}, 0);
  out_of_range.tags["gold_indices"] = "5";
  CHECK_THROWS_AS(judge_mc_perplexity(out_of_range, two, Scope::full), Error);
}

TEST_CASE("judge_mc_generative picks the ROUGE-L argmax with lowest-index ties") {
  Sample s = mc_sample({"the red house", "the blue boat", "a green tree"}, 1);
  CHECK(judge_mc_generative(s, "i would say the blue boat"));
  CHECK_FALSE(judge_mc_generative(s, "clearly the red house"));

  // Generation equally similar to choices 0 and 1: tie resolves to index 0.
  Sample tie = mc_sample({"alpha beta", "alpha beta", "gamma delta"}, 0);
  CHECK(judge_mc_generative(tie, "alpha beta"));
  Sample tie_gold1 = mc_sample({"alpha beta", "alpha beta", "gamma delta"}, 1);
  CHECK_FALSE(judge_mc_generative(tie_gold1, "alpha beta"));
}

TEST_CASE("evaluate aggregates accuracy over a subset") {
  Benchmark bench;
  bench.id = "mini";
  bench.task_kind = TaskKind::math_extract;
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.id = "q" + std::to_string(i);
    s.question = "?";
    s.answer = "answer " + std::to_string(i * 10);
    s.benchmark_id = "mini";
    bench.samples.push_back(s);
  }

  EvalOutputs outputs;
  outputs.generations["q0"] = "I get 0";     // correct
  outputs.generations["q1"] = "I get 10";    // correct
  outputs.generations["q2"] = "I get 999";   // wrong
  // q3 missing entirely.

  AccuracyReport r = evaluate(bench, {"q0", "q1", "q2", "q3"}, outputs, "all",
                              Scope::answer_only, 0.0);
  CHECK(r.benchmark_id == "mini");
  CHECK(r.subset == "all");
  CHECK(r.total == 4);
  CHECK(r.correct == 2);
  CHECK(r.missing == 1);
  CHECK(r.accuracy == doctest::Approx(0.5));

  AccuracyReport sub = evaluate(bench, {"q0"}, outputs, "contaminated",
                                Scope::answer_only, 0.0);
  CHECK(sub.total == 1);
  CHECK(sub.accuracy == doctest::Approx(1.0));

  CHECK_THROWS_AS(
      evaluate(bench, {}, outputs, "all", Scope::answer_only, 0.0), Error);
  CHECK_THROWS_AS(
      evaluate(bench, {"unknown"}, outputs, "all", Scope::answer_only, 0.0), Error);

  nlohmann::json j = accuracy_report_to_json(r);
  CHECK(j.at("benchmark_id") == "mini");
  CHECK(j.at("subset") == "all");
  CHECK(j.at("total") == 4);
  CHECK(j.at("correct") == 2);
  CHECK(j.at("missing") == 1);
  CHECK(j.at("accuracy").get<double>() == doctest::Approx(0.5));
}

TEST_CASE("evaluate judges perplexity tasks from choice traces") {
  Benchmark bench;
  bench.id = "mc";
  bench.task_kind = TaskKind::mc_perplexity;
  Sample s = mc_sample({"aa bb", "cc dd"}, 0);
  s.benchmark_id = "mc";
  bench.samples.push_back(s);

  EvalOutputs outputs;
  outputs.choice_traces["c1"] = {choice_trace(-1.0, 2), choice_trace(-2.0, 2)};
  AccuracyReport r = evaluate(bench, {"c1"}, outputs, "all", Scope::full, 0.0);
  CHECK(r.correct == 1);

  EvalOutputs empty;
  AccuracyReport miss = evaluate(bench, {"c1"}, empty, "all", Scope::full, 0.0);
  CHECK(miss.correct == 0);
  CHECK(miss.missing == 1);
}

TEST_CASE("summarize_rocs averages per-method operating points") {
  RocReport a = roc(make_set({2.0, 3.0}, {0.0, 1.0}), {0.01});   // auc 1.0
  RocReport b = roc(make_set({1.0, 1.0}, {1.0, 1.0}), {0.01});   // auc 0.5
  a.label = "run1";
  b.label = "run2";
  RocReport c = roc(make_set({5.0}, {0.0}, "min_k"), {0.01});    // auc 1.0

  std::vector<MethodSummary> sums = summarize_rocs({a, b, c});
  REQUIRE(sums.size() == 2);
  // Sorted by method id: min_k before yeom.
  CHECK(sums[0].method_id == "min_k");
  CHECK(sums[0].runs == 1);
  CHECK(sums[0].mean_auc == doctest::Approx(1.0));
  CHECK(sums[1].method_id == "yeom");
  CHECK(sums[1].runs == 2);
  CHECK(sums[1].mean_auc == doctest::Approx(0.75));
  CHECK(sums[1].mean_tpr_at.at(0.01) == doctest::Approx(0.5));

  nlohmann::json j = summaries_to_json(sums);
  REQUIRE(j.at("methods").is_array());
  CHECK(j.at("methods").size() == 2);
  CHECK(j.at("methods")[1].at("method_id") == "yeom");
  CHECK(j.at("methods")[1].at("mean_auc").get<double>() == doctest::Approx(0.75));

  std::string csv = summaries_to_csv(sums);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("method_id") != std::string::npos);
  CHECK(header.find("mean_auc") != std::string::npos);
  std::string row1, row2;
  std::getline(lines, row1);
  std::getline(lines, row2);
  CHECK(row1.substr(0, 5) == "min_k");
  CHECK(row2.substr(0, 4) == "yeom");
}

TEST_CASE("generations survive a JSONL round trip and reject duplicates") {
  testutil::TempDir dir;
  std::string path = dir.file("gen.jsonl");
  std::map<std::string, std::string> gens = {
      {"a", "first answer"},
      {"b", "line with \"quotes\" and \\ backslash"},
  };
  save_generations_jsonl(gens, path);
  auto back = load_generations_jsonl(path);
  CHECK(back == gens);

  std::string dup = dir.file("dup.jsonl");
  testutil::write_file(dup,
                       "{\"sample_id\":\"a\",\"generation\":\"x\"}\n"
                       "{\"sample_id\":\"a\",\"generation\":\"y\"}\n");
  CHECK_THROWS_AS(load_generations_jsonl(dup), Error);
}
