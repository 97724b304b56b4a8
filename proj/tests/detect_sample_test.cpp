// Sample-level detection scores: registry, score functions, pairing rules,
// and score JSONL round trips.
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/detect_sample.hpp"
#include "contamkit/error.hpp"
#include "contamkit/textmetrics.hpp"
#include "contamkit/trace.hpp"
#include "test_util.hpp"

using namespace contamkit;

namespace {

TokenTrace make_trace(std::string sample_id, std::string model_id, std::string variant,
                      std::vector<double> logprobs, size_t answer_start) {
  TokenTrace t;
  t.sample_id = std::move(sample_id);
  t.model_id = std::move(model_id);
  t.variant = std::move(variant);
  t.logprobs = std::move(logprobs);
  t.tokens.resize(t.logprobs.size(), "w");
  t.answer_start = answer_start;
  return t;
}

}  // namespace

TEST_CASE("method registry lists every method with frozen metadata") {
  const auto& reg = method_registry();
  REQUIRE(reg.size() == 9);

  auto* yeom = find_method("yeom");
  REQUIRE(yeom != nullptr);
  CHECK(yeom->level == MethodLevel::sample);
  CHECK(yeom->access == AccessLevel::grey);
  CHECK_FALSE(yeom->needs_reference);
  CHECK(yeom->threshold_based);
  CHECK(yeom->assumes_verbatim);

  auto* min_k = find_method("min_k");
  REQUIRE(min_k != nullptr);
  CHECK(min_k->access == AccessLevel::grey);
  CHECK_FALSE(min_k->assumes_verbatim);

  auto* reference = find_method("reference");
  REQUIRE(reference != nullptr);
  CHECK(reference->needs_reference);
  CHECK_FALSE(reference->threshold_based);

  auto* rouge = find_method("blackbox_rouge");
  REQUIRE(rouge != nullptr);
  CHECK(rouge->access == AccessLevel::black);
  CHECK(rouge->level == MethodLevel::sample);

  auto* dpcc = find_method("dpcc");
  REQUIRE(dpcc != nullptr);
  CHECK(dpcc->level == MethodLevel::benchmark);
  CHECK(dpcc->access == AccessLevel::grey);

  auto* cleaneval = find_method("cleaneval");
  REQUIRE(cleaneval != nullptr);
  CHECK(cleaneval->level == MethodLevel::benchmark);
  CHECK(cleaneval->access == AccessLevel::black);

  auto* ngram = find_method("ngram");
  REQUIRE(ngram != nullptr);
  CHECK(ngram->access == AccessLevel::oracle);
  CHECK(ngram->assumes_verbatim);

  auto* decon = find_method("llm_decontaminator");
  REQUIRE(decon != nullptr);
  CHECK(decon->access == AccessLevel::oracle);
  CHECK_FALSE(decon->assumes_verbatim);

  CHECK(find_method("nope") == nullptr);
  CHECK(kScoreOrientation == std::string("higher_is_contaminated"));
}

TEST_CASE("yeom score is negated mean NLL in both scopes") {
  TokenTrace t = make_trace("s1", "m", "original", {-1.0, -2.0, -4.0, -5.0}, 2);
  Score full = score_yeom(t, Scope::full);
  CHECK(full.method_id == "yeom");
  CHECK(full.sample_id == "s1");
  CHECK(full.value == doctest::Approx(-3.0).epsilon(1e-15));
  Score ans = score_yeom(t, Scope::answer_only);
  CHECK(ans.value == doctest::Approx(-4.5).epsilon(1e-15));
  CHECK(full.value == -mean_nll(t, Scope::full));
}

TEST_CASE("min-k score matches the trace-level helper and k=100 equals yeom") {
  TokenTrace t = make_trace("s1", "m", "original", {-0.5, -3.0, -1.5, -2.0, -4.0}, 0);
  Score s = score_min_k(t, 40.0, Scope::full);
  CHECK(s.method_id == "min_k");
  // ceil(0.4 * 5) = 2 smallest: -4.0, -3.0
  CHECK(s.value == doctest::Approx(-3.5).epsilon(1e-15));
  CHECK(s.value == min_k_mean_logprob(t, 40.0, Scope::full));

  Score all = score_min_k(t, 100.0, Scope::full);
  Score y = score_yeom(t, Scope::full);
  CHECK(std::fabs(all.value - y.value) <= 1e-12);
}

TEST_CASE("lowercase score is the NLL shift under casefolding") {
  TokenTrace orig = make_trace("s1", "m", "original", {-1.0, -1.0}, 0);
  TokenTrace lower = make_trace("s1", "m", "lowercase", {-2.0, -3.0}, 0);
  Score s = score_lowercase(orig, lower, Scope::full);
  CHECK(s.method_id == "lowercase");
  CHECK(s.value == doctest::Approx(1.5).epsilon(1e-15));

  // Memorized original (low NLL) vs unfamiliar lowercase (high NLL) gives a
  // large positive score: orientation is higher-is-contaminated.
  CHECK(s.value > 0.0);
}

TEST_CASE("lowercase pairing rules reject mismatched traces") {
  TokenTrace orig = make_trace("s1", "m", "original", {-1.0}, 0);

  TokenTrace wrong_sample = make_trace("s2", "m", "lowercase", {-1.0}, 0);
  CHECK_THROWS_AS(score_lowercase(orig, wrong_sample, Scope::full), Error);
  try {
    score_lowercase(orig, wrong_sample, Scope::full);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::pairing);
  }

  TokenTrace wrong_model = make_trace("s1", "other", "lowercase", {-1.0}, 0);
  CHECK_THROWS_AS(score_lowercase(orig, wrong_model, Scope::full), Error);

  TokenTrace wrong_variant = make_trace("s1", "m", "original", {-1.0}, 0);
  CHECK_THROWS_AS(score_lowercase(orig, wrong_variant, Scope::full), Error);

  TokenTrace swapped_roles = make_trace("s1", "m", "lowercase", {-1.0}, 0);
  CHECK_THROWS_AS(score_lowercase(swapped_roles, orig, Scope::full), Error);
}

TEST_CASE("reference score is the reference-minus-target NLL gap") {
  TokenTrace target = make_trace("s1", "target", "original", {-1.0, -1.0}, 0);
  TokenTrace ref = make_trace("s1", "ref", "original", {-4.0, -2.0}, 0);
  Score s = score_reference(target, ref, Scope::full);
  CHECK(s.method_id == "reference");
  CHECK(s.value == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("reference pairing rules require distinct models and matching variants") {
  TokenTrace target = make_trace("s1", "target", "original", {-1.0}, 0);

  TokenTrace same_model = make_trace("s1", "target", "original", {-2.0}, 0);
  CHECK_THROWS_AS(score_reference(target, same_model, Scope::full), Error);
  try {
    score_reference(target, same_model, Scope::full);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::pairing);
  }

  TokenTrace wrong_sample = make_trace("s2", "ref", "original", {-2.0}, 0);
  CHECK_THROWS_AS(score_reference(target, wrong_sample, Scope::full), Error);

  TokenTrace wrong_variant = make_trace("s1", "ref", "lowercase", {-2.0}, 0);
  CHECK_THROWS_AS(score_reference(target, wrong_variant, Scope::full), Error);
}

TEST_CASE("black-box rouge score equals ROUGE-L against the gold answer") {
  Sample sample;
  sample.id = "q7";
  sample.question = "irrelevant";
  sample.answer = "the cat sat on the mat";
  Score s = score_blackbox_rouge("the cat sat on a mat", sample);
  CHECK(s.method_id == "blackbox_rouge");
  CHECK(s.sample_id == "q7");
  CHECK(s.value == doctest::Approx(rouge_l("the cat sat on a mat", sample.answer)));
  CHECK(s.value > 0.5);

  Score exact = score_blackbox_rouge(sample.answer, sample);
  CHECK(exact.value == doctest::Approx(1.0));
}

TEST_CASE("scores survive a JSONL round trip") {
  testutil::TempDir dir;
  std::string path = dir.file("scores.jsonl");
  std::vector<Score> scores = {
      {"yeom", "a", -1.25},
      {"yeom", "b", 0.0},
      {"min_k", "a", -0.3333333333333333},
  };
  save_scores_jsonl(scores, path);
  std::vector<Score> back = load_scores_jsonl(path);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < scores.size(); ++i) {
    CHECK(back[i].method_id == scores[i].method_id);
    CHECK(back[i].sample_id == scores[i].sample_id);
    CHECK(back[i].value == scores[i].value);  // bit-exact
  }
}

TEST_CASE("score loading reports the offending line on parse errors") {
  testutil::TempDir dir;
  std::string path = dir.file("bad.jsonl");
  testutil::write_file(path,
                       "{\"method_id\":\"yeom\",\"sample_id\":\"a\",\"value\":-1.0}\n"
                       "{not json\n");
  try {
    load_scores_jsonl(path);
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(e.context().find(":2") != std::string::npos);
  }

  std::string missing = dir.file("missing.jsonl");
  testutil::write_file(missing, "{\"method_id\":\"yeom\",\"sample_id\":\"a\"}\n");
  CHECK_THROWS_AS(load_scores_jsonl(missing), Error);

  CHECK_THROWS_AS(load_scores_jsonl(dir.file("nonexistent.jsonl")), Error);
}

TEST_CASE("score saving skips blank lines on reload") {
  testutil::TempDir dir;
  std::string path = dir.file("gaps.jsonl");
  testutil::write_file(path,
                       "{\"method_id\":\"yeom\",\"sample_id\":\"a\",\"value\":1.0}\n"
                       "\n"
                       "{\"method_id\":\"yeom\",\"sample_id\":\"b\",\"value\":2.0}\n");
  std::vector<Score> back = load_scores_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].sample_id == "b");
}
