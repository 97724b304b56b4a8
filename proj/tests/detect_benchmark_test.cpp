// Benchmark-level detection: perturbation perplexity comparisons and the
// rephrase-and-re-evaluate accuracy gap.
#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include "contamkit/detect_benchmark.hpp"
#include "contamkit/eal.hpp"
#include "contamkit/error.hpp"
#include "contamkit/llmclient.hpp"
#include "contamkit/profile.hpp"
#include "contamkit/trace.hpp"
#include "test_util.hpp"

using namespace contamkit;

namespace {

TokenTrace flat_trace(std::string sample_id, std::string model_id, std::string variant,
                      double logprob_each, size_t len = 4) {
  TokenTrace t;
  t.sample_id = std::move(sample_id);
  t.model_id = std::move(model_id);
  t.variant = std::move(variant);
  t.tokens.resize(len, "w");
  t.logprobs.resize(len, logprob_each);
  t.answer_start = 0;
  return t;
}

RephraseProfile perturb_profile() {
  RephraseProfile p;
  p.benchmark_id = "bench";
  p.system_prompt = "Reword lightly.";
  p.user_template = "Variation {{index}}.\nQuestion: {{question}}\nAnswer: {{answer}}";
  p.followup_user_prompt = "unused";
  return p;
}

ChatRequest perturb_request(const Sample& s, const RephraseProfile& profile, int index,
                            const std::string& model) {
  ChatRequest req;
  req.model_id = model;
  req.system_prompt = profile.system_prompt;
  std::string user = render_rephrase_user_prompt(profile, s);
  user = substitute_placeholder(std::move(user), "index", std::to_string(index));
  req.messages.push_back({Role::user, user});
  req.temperature = 0.0;
  req.max_tokens = 1024;
  return req;
}

ChatResponse text_response(std::string text) {
  ChatResponse r;
  r.text = std::move(text);
  return r;
}

}  // namespace

TEST_CASE("dpcc_sample_ratio counts strictly-higher perplexities") {
  TokenTrace orig = flat_trace("s1", "m", "original", -2.0);
  std::vector<TokenTrace> perturbed = {
      flat_trace("s1", "m", "perturbed:0", -3.0),  // higher ppl
      flat_trace("s1", "m", "perturbed:1", -2.5),  // higher ppl
      flat_trace("s1", "m", "perturbed:2", -2.0),  // exact tie: not counted
      flat_trace("s1", "m", "perturbed:3", -1.0),  // lower ppl
  };
  CHECK(dpcc_sample_ratio(orig, perturbed, Scope::full) == doctest::Approx(0.5));

  std::vector<TokenTrace> all_higher = {flat_trace("s1", "m", "perturbed:0", -4.0)};
  CHECK(dpcc_sample_ratio(orig, all_higher, Scope::full) == doctest::Approx(1.0));
}

TEST_CASE("dpcc_sample_ratio enforces pairing conventions") {
  TokenTrace orig = flat_trace("s1", "m", "original", -2.0);

  std::vector<TokenTrace> empty;
  CHECK_THROWS_AS(dpcc_sample_ratio(orig, empty, Scope::full), Error);

  TokenTrace wrong_variant = flat_trace("s1", "m", "lowercase", -2.0);
  std::vector<TokenTrace> ok = {flat_trace("s1", "m", "perturbed:0", -3.0)};
  CHECK_THROWS_AS(dpcc_sample_ratio(wrong_variant, ok, Scope::full), Error);

  std::vector<TokenTrace> wrong_sample = {flat_trace("s2", "m", "perturbed:0", -3.0)};
  CHECK_THROWS_AS(dpcc_sample_ratio(orig, wrong_sample, Scope::full), Error);

  std::vector<TokenTrace> wrong_model = {flat_trace("s1", "other", "perturbed:0", -3.0)};
  CHECK_THROWS_AS(dpcc_sample_ratio(orig, wrong_model, Scope::full), Error);

  std::vector<TokenTrace> bad_tag = {flat_trace("s1", "m", "variant7", -3.0)};
  CHECK_THROWS_AS(dpcc_sample_ratio(orig, bad_tag, Scope::full), Error);
}

TEST_CASE("dpcc_benchmark averages ratios and flags strictly above threshold") {
  Benchmark bench;
  bench.id = "b";
  for (const char* id : {"q0", "q1", "q2", "q3"}) {
    Sample s;
    s.id = id;
    s.question = "?";
    s.answer = "a";
    bench.samples.push_back(s);
  }

  TraceStore store;
  // q0: all 5 perturbed strictly higher -> ratio 1.0.
  store.insert(flat_trace("q0", "m", "original", -1.0));
  for (int i = 0; i < 5; ++i)
    store.insert(flat_trace("q0", "m", "perturbed:" + std::to_string(i), -2.0));
  // q1: 4 of 5 higher -> 0.8.
  store.insert(flat_trace("q1", "m", "original", -1.5));
  for (int i = 0; i < 4; ++i)
    store.insert(flat_trace("q1", "m", "perturbed:" + std::to_string(i), -2.0));
  store.insert(flat_trace("q1", "m", "perturbed:4", -1.0));
  // q2: original only -> skipped. q3: no traces at all -> skipped.
  store.insert(flat_trace("q2", "m", "original", -1.0));

  DpccReport r = dpcc_benchmark(bench, store, "m", Scope::full, 0.85);
  CHECK(r.benchmark_id == "b");
  CHECK(r.model_id == "m");
  CHECK(r.scored_samples == 2);
  CHECK(r.skipped_samples == 2);
  CHECK(r.perturbations_per_sample == 5);
  CHECK(r.per_sample_ratio.at("q0") == doctest::Approx(1.0));
  CHECK(r.per_sample_ratio.at("q1") == doctest::Approx(0.8));
  CHECK(r.benchmark_score == doctest::Approx(0.9));
  CHECK(r.flagged);  // 0.9 > 0.85

  // A benchmark mean exactly at the threshold is NOT flagged (strict >).
  DpccReport at_threshold = dpcc_benchmark(bench, store, "m", Scope::full, 0.9);
  CHECK(at_threshold.benchmark_score == doctest::Approx(0.9));
  CHECK_FALSE(at_threshold.flagged);

  // Subset restriction: only q0 -> score 1.0, no skips.
  std::vector<std::string> subset = {"q0"};
  DpccReport sub = dpcc_benchmark(bench, store, "m", Scope::full, 0.85, &subset);
  CHECK(sub.scored_samples == 1);
  CHECK(sub.skipped_samples == 0);
  CHECK(sub.benchmark_score == doctest::Approx(1.0));

  std::vector<std::string> unknown = {"nope"};
  CHECK_THROWS_AS(dpcc_benchmark(bench, store, "m", Scope::full, 0.85, &unknown), Error);

  // Wrong model id: nothing scoreable.
  CHECK_THROWS_AS(dpcc_benchmark(bench, store, "other", Scope::full, 0.85), Error);

  nlohmann::json j = dpcc_report_to_json(r);
  CHECK(j.at("benchmark_id") == "b");
  CHECK(j.at("benchmark_score").get<double>() == doctest::Approx(0.9));
  CHECK(j.at("flagged") == true);
  CHECK(j.at("per_sample_ratio").at("q1").get<double>() == doctest::Approx(0.8));
}

TEST_CASE("generate_perturbations sends distinct prompts and tags variants") {
  RephraseProfile profile = perturb_profile();
  Sample s;
  s.id = "src";
  s.question = "How many beads?";
  s.answer = "12";

  auto mock = std::make_shared<MockBackend>(MockBackend::Options{});
  for (int i = 0; i < 3; ++i) {
    ChatRequest req = perturb_request(s, profile, i, "rephr");
    mock->add_response(req, text_response("New Question: variant " + std::to_string(i) +
                                          "\nNew Answer: still 12"));
  }
  LlmClient client(mock, LlmClientConfig{});

  PerturbationResult r = generate_perturbations(s, 3, client, profile, "rephr");
  CHECK(r.parse_failures == 0);
  REQUIRE(r.samples.size() == 3);
  for (int i = 0; i < 3; ++i) {
    const Sample& p = r.samples[static_cast<size_t>(i)];
    CHECK(p.id == "src");
    CHECK(p.question == "variant " + std::to_string(i));
    CHECK(p.answer == "still 12");
    CHECK(p.tags.at("variant") == "perturbed:" + std::to_string(i));
  }
  // The {{index}} placeholder must make each temperature-0 request distinct.
  CHECK(mock->chat_log().size() == 3);
  CHECK(mock->chat_log()[0].messages[0].text != mock->chat_log()[1].messages[0].text);

  CHECK_THROWS_AS(generate_perturbations(s, 0, client, profile, "rephr"), Error);
}

TEST_CASE("generate_perturbations retries a parse failure once, then skips") {
  RephraseProfile profile = perturb_profile();
  Sample s;
  s.id = "src";
  s.question = "q";
  s.answer = "a";

  auto mock = std::make_shared<MockBackend>(MockBackend::Options{});
  // Variant 0: garbage then a good reply on the retry (same fingerprint: the
  // tape queues responses).
  ChatRequest req0 = perturb_request(s, profile, 0, "rephr");
  mock->add_response(req0, text_response("no markers at all"));
  mock->add_response(req0, text_response("New Question: fixed\nNew Answer: a2"));
  // Variant 1: garbage twice -> counted as a parse failure.
  ChatRequest req1 = perturb_request(s, profile, 1, "rephr");
  mock->add_response(req1, text_response("still no markers"));
  LlmClient client(mock, LlmClientConfig{});

  PerturbationResult r = generate_perturbations(s, 2, client, profile, "rephr");
  CHECK(r.parse_failures == 1);
  REQUIRE(r.samples.size() == 1);
  CHECK(r.samples[0].question == "fixed");
  CHECK(r.samples[0].tags.at("variant") == "perturbed:0");

  // All variants failing is a domain error.
  auto mock2 = std::make_shared<MockBackend>(MockBackend::Options{});
  mock2->add_response(perturb_request(s, profile, 0, "rephr"),
                      text_response("nothing"));
  LlmClient client2(mock2, LlmClientConfig{});
  CHECK_THROWS_AS(generate_perturbations(s, 1, client2, profile, "rephr"), Error);
}

TEST_CASE("render_eval_question inlines labeled options for multiple choice") {
  Sample s;
  s.id = "x";
  s.question = "Pick the metal.";
  s.answer = "copper";
  s.choices = std::vector<std::string>{"copper", "quartz", "cedar"};
  s.gold_index = 0;
  CHECK(render_eval_question(s, TaskKind::mc_perplexity) ==
        "Pick the metal.\nA: copper\nB: quartz\nC: cedar");
  CHECK(render_eval_question(s, TaskKind::mc_generative) ==
        "Pick the metal.\nA: copper\nB: quartz\nC: cedar");
  CHECK(render_eval_question(s, TaskKind::math_extract) == "Pick the metal.");

  Sample free;
  free.id = "y";
  free.question = "How many?";
  free.answer = "3";
  CHECK(render_eval_question(free, TaskKind::mc_generative) == "How many?");
}

TEST_CASE("cleaneval profile loads sections with a default marker") {
  testutil::TempDir dir;
  std::string path = dir.file("ce.txt");
  testutil::write_file(path,
                       "[SYSTEM]\nRephrase the question.\n\n[USER_TEMPLATE]\n"
                       "Question: {{question}}\nAnswer: {{answer}}\n");
  CleanEvalProfile p = load_cleaneval_profile(path);
  CHECK(p.system_prompt == "Rephrase the question.");
  CHECK(p.question_marker == "New Question:");

  std::string custom = dir.file("custom.txt");
  testutil::write_file(custom,
                       "[SYSTEM]\ns\n\n[USER_TEMPLATE]\n{{question}} {{answer}}\n\n"
                       "[QUESTION_MARKER]\nReworded:\n");
  CHECK(load_cleaneval_profile(custom).question_marker == "Reworded:");

  std::string broken = dir.file("broken.txt");
  testutil::write_file(broken, "[SYSTEM]\nonly\n");
  CHECK_THROWS_AS(load_cleaneval_profile(broken), Error);
}

TEST_CASE("cleaneval_rephrase swaps questions and keeps gold answers") {
  Benchmark bench;
  bench.id = "mini";
  bench.task_kind = TaskKind::math_extract;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.id = "q" + std::to_string(i);
    s.question = "original question " + std::to_string(i);
    s.answer = "answer is " + std::to_string(i);
    bench.samples.push_back(s);
  }

  CleanEvalProfile profile;
  profile.system_prompt = "Rephrase.";
  profile.user_template = "Question: {{question}}\nAnswer: {{answer}}";

  auto mock = std::make_shared<MockBackend>(MockBackend::Options{});
  auto rephrase_req = [&](const Sample& s) {
    ChatRequest req;
    req.model_id = "rephr";
    req.system_prompt = profile.system_prompt;
    std::string user = substitute_placeholder(profile.user_template, "question",
                                              s.question);
    user = substitute_placeholder(std::move(user), "answer", s.answer);
    req.messages.push_back({Role::user, user});
    req.temperature = 0.0;
    req.max_tokens = 1024;
    return req;
  };
  // q0/q1 parse; the marker match must take the LAST occurrence.
  mock->add_response(rephrase_req(bench.samples[0]),
                     text_response("Thinking: New Question: draft\n"
                                   "New Question: reworded zero"));
  mock->add_response(rephrase_req(bench.samples[1]),
                     text_response("New Question: reworded one"));
  mock->add_response(rephrase_req(bench.samples[2]), text_response("no marker"));
  LlmClient client(mock, LlmClientConfig{});

  CleanEvalRephrased out = cleaneval_rephrase(bench, client, profile, "rephr");
  REQUIRE(out.benchmark.samples.size() == 2);
  CHECK(out.benchmark.id == "mini");
  CHECK(out.benchmark.samples[0].id == "q0");
  CHECK(out.benchmark.samples[0].question == "reworded zero");
  CHECK(out.benchmark.samples[0].answer == "answer is 0");  // gold unchanged
  CHECK(out.benchmark.samples[0].tags.at("variant") == "rephrased");
  CHECK(out.benchmark.samples[1].question == "reworded one");
  REQUIRE(out.skipped_ids.size() == 1);
  CHECK(out.skipped_ids[0] == "q2");
}

TEST_CASE("cleaneval_run reports the original-vs-rephrased accuracy gap") {
  Benchmark bench;
  bench.id = "mini";
  bench.task_kind = TaskKind::math_extract;
  for (int i = 0; i < 2; ++i) {
    Sample s;
    s.id = "q" + std::to_string(i);
    s.question = "question " + std::to_string(i);
    s.answer = "answer is " + std::to_string(10 * (i + 1));
    bench.samples.push_back(s);
  }

  CleanEvalProfile profile;
  profile.system_prompt = "Rephrase.";
  profile.user_template = "Q: {{question}}\nA: {{answer}}";

  auto mock = std::make_shared<MockBackend>(MockBackend::Options{});
  auto chat_req = [](const std::string& model, const std::string& system,
                     const std::string& user) {
    ChatRequest req;
    req.model_id = model;
    if (!system.empty()) req.system_prompt = system;
    req.messages.push_back({Role::user, user});
    req.temperature = 0.0;
    req.max_tokens = 1024;
    return req;
  };
  // Rephrase step.
  mock->add_response(chat_req("rephr", "Rephrase.", "Q: question 0\nA: answer is 10"),
                     text_response("New Question: reworded 0"));
  mock->add_response(chat_req("rephr", "Rephrase.", "Q: question 1\nA: answer is 20"),
                     text_response("New Question: reworded 1"));
  // Target on originals: both correct.
  mock->add_response(chat_req("tgt", "", "question 0"), text_response("It is 10"));
  mock->add_response(chat_req("tgt", "", "question 1"), text_response("It is 20"));
  // Target on rephrased: q0 correct, q1 wrong -> accuracy drops to 0.5.
  mock->add_response(chat_req("tgt", "", "reworded 0"), text_response("Still 10"));
  mock->add_response(chat_req("tgt", "", "reworded 1"), text_response("Maybe 999"));
  LlmClient client(mock, LlmClientConfig{});

  CleanEvalOptions options;
  options.rephraser_model = "rephr";
  options.target_model = "tgt";
  options.scope = Scope::answer_only;

  CleanEvalReport r = cleaneval_run(bench, client, profile, options);
  CHECK(r.benchmark_id == "mini");
  CHECK(r.target_model == "tgt");
  CHECK(r.evaluated == 2);
  CHECK(r.rephrase_parse_failures == 0);
  CHECK(r.accuracy_original == doctest::Approx(1.0));
  CHECK(r.accuracy_rephrased == doctest::Approx(0.5));
  CHECK(r.gap == doctest::Approx(0.5));

  nlohmann::json j = cleaneval_report_to_json(r);
  CHECK(j.at("gap").get<double>() == doctest::Approx(0.5));
  CHECK(j.at("evaluated") == 2);

  CleanEvalOptions missing_models;
  CHECK_THROWS_AS(cleaneval_run(bench, client, profile, missing_models), Error);
}

TEST_CASE("cleaneval_run judges perplexity tasks through per-choice scoring") {
  Benchmark bench;
  bench.id = "mc";
  bench.task_kind = TaskKind::mc_perplexity;
  Sample s;
  s.id = "c0";
  s.question = "Pick.";
  s.choices = std::vector<std::string>{"alpha", "beta"};
  s.gold_index = 0;
  s.answer = "alpha";
  bench.samples.push_back(s);

  CleanEvalProfile profile;
  profile.system_prompt = "Rephrase.";
  profile.user_template = "Q: {{question}}\nA: {{answer}}";

  auto mock = std::make_shared<MockBackend>(MockBackend::Options{});
  {
    ChatRequest req;
    req.model_id = "rephr";
    req.system_prompt = "Rephrase.";
    // The rephraser sees the options inline.
    req.messages.push_back({Role::user, "Q: Pick.\nA: alpha\nB: beta\nA: alpha"});
    req.temperature = 0.0;
    req.max_tokens = 1024;
    mock->add_response(req, text_response("New Question: Choose."));
  }
  auto keyed_trace = [](double lp) {
    TokenTrace t;
    t.model_id = "tgt";
    t.tokens = {"p", "c"};
    t.logprobs = {-1.0, lp};
    t.answer_start = 1;
    return t;
  };
  // Original run: gold choice wins. Question rendered with options.
  mock->add_score("tgt", "Pick.\nA: alpha\nB: beta\n", "alpha", keyed_trace(-0.5));
  mock->add_score("tgt", "Pick.\nA: alpha\nB: beta\n", "beta", keyed_trace(-2.0));
  // Rephrased run: gold choice loses.
  mock->add_score("tgt", "Choose.\n", "alpha", keyed_trace(-2.0));
  mock->add_score("tgt", "Choose.\n", "beta", keyed_trace(-0.5));
  LlmClient client(mock, LlmClientConfig{});

  CleanEvalOptions options;
  options.rephraser_model = "rephr";
  options.target_model = "tgt";
  options.scope = Scope::answer_only;

  CleanEvalReport r = cleaneval_run(bench, client, profile, options);
  CHECK(r.accuracy_original == doctest::Approx(1.0));
  CHECK(r.accuracy_rephrased == doctest::Approx(0.0));
  CHECK(r.gap == doctest::Approx(1.0));
}
