#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contamkit/error.hpp"
#include "contamkit/trace.hpp"
#include "test_util.hpp"

using namespace contamkit;
using testutil::TempDir;

namespace {

TokenTrace make_trace(std::vector<double> logprobs, size_t answer_start = 0,
                      const std::string& sample_id = "s1",
                      const std::string& variant = "original",
                      const std::string& model_id = "m") {
  TokenTrace t;
  t.sample_id = sample_id;
  t.variant = variant;
  t.model_id = model_id;
  t.logprobs = std::move(logprobs);
  t.tokens.resize(t.logprobs.size(), "tok");
  t.answer_start = answer_start;
  return t;
}

// Sort-and-average reference for the min-k mean.
double min_k_oracle(std::vector<double> scoped, double k_percent) {
  std::sort(scoped.begin(), scoped.end());
  size_t m = static_cast<size_t>(
      std::ceil(k_percent / 100.0 * static_cast<double>(scoped.size())));
  m = std::max<size_t>(1, std::min(m, scoped.size()));
  double sum = std::accumulate(scoped.begin(), scoped.begin() + static_cast<long>(m), 0.0);
  return sum / static_cast<double>(m);
}

}  // namespace

TEST_CASE("validate_trace rejects malformed traces") {
  CHECK_NOTHROW(validate_trace(make_trace({-1.0, -2.0}, 1)));
  CHECK_THROWS_AS(validate_trace(make_trace({})), Error);  // empty
  TokenTrace mismatched = make_trace({-1.0, -2.0});
  mismatched.tokens.pop_back();
  CHECK_THROWS_AS(validate_trace(mismatched), Error);
  CHECK_THROWS_AS(validate_trace(make_trace({-1.0, -2.0}, 2)), Error);  // start at end
  CHECK_THROWS_AS(validate_trace(make_trace({-1.0, 0.5})), Error);      // positive lp
  CHECK_THROWS_AS(validate_trace(make_trace({-1.0, std::nan("")})), Error);
  TokenTrace no_variant = make_trace({-1.0});
  no_variant.variant = "";
  CHECK_THROWS_AS(validate_trace(no_variant), Error);
  CHECK_NOTHROW(validate_trace(make_trace({0.0, -0.0})));  // zero is a legal logprob
}

TEST_CASE("mean_nll and perplexity over both scopes") {
  TokenTrace t = make_trace({-1.0, -2.0, -3.0, -4.0}, 2);
  CHECK(mean_nll(t, Scope::full) == doctest::Approx(2.5));
  CHECK(mean_nll(t, Scope::answer_only) == doctest::Approx(3.5));
  CHECK(perplexity(t, Scope::full) == doctest::Approx(std::exp(2.5)));
  CHECK(perplexity(t, Scope::answer_only) == doctest::Approx(std::exp(3.5)));

  TokenTrace degenerate = make_trace({-1.0, -2.0});
  degenerate.answer_start = 2;  // bypasses validate; the scorer must still refuse
  CHECK_THROWS_AS(mean_nll(degenerate, Scope::answer_only), Error);
}

TEST_CASE("min_k_mean_logprob matches the sort-tail oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lp(-5.0, 0.0);
  std::uniform_int_distribution<size_t> len(1, 40);
  std::uniform_real_distribution<double> kd(0.5, 100.0);
  for (int i = 0; i < 400; ++i) {
    size_t n = len(rng);
    std::vector<double> lps(n);
    for (double& x : lps) x = lp(rng);
    size_t start = rng() % n;
    TokenTrace t = make_trace(lps, start);
    double k = kd(rng);
    std::vector<double> scoped(lps.begin() + static_cast<long>(start), lps.end());
    CAPTURE(i);
    CHECK(min_k_mean_logprob(t, k, Scope::answer_only) ==
          doctest::Approx(min_k_oracle(scoped, k)).epsilon(1e-12));
    CHECK(min_k_mean_logprob(t, 100.0, Scope::full) ==
          doctest::Approx(-mean_nll(t, Scope::full)).epsilon(1e-12));
  }
}

TEST_CASE("min_k rejects out-of-range percentiles") {
  TokenTrace t = make_trace({-1.0, -2.0});
  CHECK_THROWS_AS(min_k_mean_logprob(t, 0.0), Error);
  CHECK_THROWS_AS(min_k_mean_logprob(t, -5.0), Error);
  CHECK_THROWS_AS(min_k_mean_logprob(t, 100.5), Error);
  CHECK_NOTHROW(min_k_mean_logprob(t, 100.0));
}

TEST_CASE("scope conversions") {
  CHECK(scope_from_string("answer_only") == Scope::answer_only);
  CHECK(scope_from_string("full") == Scope::full);
  CHECK(to_string(Scope::answer_only) == "answer_only");
  CHECK_THROWS_AS(scope_from_string("bogus"), Error);
}

TEST_CASE("TraceStore keying, duplicates and prefix lookup") {
  TraceStore store;
  store.insert(make_trace({-1.0}, 0, "s1", "original", "m1"));
  store.insert(make_trace({-1.0}, 0, "s1", "lowercase", "m1"));
  store.insert(make_trace({-1.0}, 0, "s1", "original", "m2"));
  store.insert(make_trace({-1.0}, 0, "s1", "choice:0", "m1"));
  store.insert(make_trace({-1.0}, 0, "s1", "choice:1", "m1"));
  CHECK_THROWS_AS(store.insert(make_trace({-2.0}, 0, "s1", "original", "m1")), Error);
  CHECK(store.size() == 5);

  CHECK(store.find("s1", "original", "m1") != nullptr);
  CHECK(store.find("s1", "original", "m3") == nullptr);

  auto choices = store.find_prefix("s1", "choice:", "m1");
  REQUIRE(choices.size() == 2);
  CHECK(choices[0]->variant == "choice:0");
  CHECK(choices[1]->variant == "choice:1");
  CHECK(store.find_prefix("s1", "perturbed:", "m1").empty());

  auto models = store.model_ids();
  CHECK(models == std::vector<std::string>{"m1", "m2"});
}

TEST_CASE("trace JSONL round trip is bit exact") {
  TempDir dir;
  std::string path = dir.file("traces.jsonl");
  TraceStore store;
  // awkward doubles: not exactly representable / subnormal-adjacent
  store.insert(make_trace({-0.1, -1.0 / 3.0, -2.2250738585072014e-308, 0.0}, 1, "s1"));
  store.insert(make_trace({-17.25}, 0, "s2"));
  save_traces(store, path);
  TraceStore back = load_traces(path);
  REQUIRE(back.size() == store.size());
  const TokenTrace* t1 = back.find("s1", "original", "m");
  REQUIRE(t1 != nullptr);
  CHECK(*t1 == *store.find("s1", "original", "m"));
  CHECK(t1->logprobs[0] == -0.1);  // exact bit equality after the round trip
  CHECK(t1->logprobs[1] == -1.0 / 3.0);
  CHECK(t1->logprobs[2] == -2.2250738585072014e-308);
}

TEST_CASE("trace_to_json_line carries the fixed field set") {
  TokenTrace t = make_trace({-1.5, -2.5}, 1, "sid", "original", "mid");
  t.tokens = {"Hello", " world"};
  nlohmann::json j = nlohmann::json::parse(trace_to_json_line(t));
  CHECK(j.at("sample_id") == "sid");
  CHECK(j.at("variant") == "original");
  CHECK(j.at("model_id") == "mid");
  CHECK(j.at("tokens") == nlohmann::json({"Hello", " world"}));
  CHECK(j.at("logprobs") == nlohmann::json({-1.5, -2.5}));
  CHECK(j.at("answer_start") == 1);
  CHECK(j.size() == 6);
}
