#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contamkit/corpus.hpp"
#include "contamkit/llmclient.hpp"
#include "contamkit/profile.hpp"
#include "contamkit/textmetrics.hpp"

namespace contamkit {

// FNV-1a over the normalized tokens of one window, joined with the 0x1F
// unit separator so token boundaries cannot be forged by concatenation.
uint64_t ngram_hash(const TokenSeq& tokens, size_t begin, size_t n);

// Probabilistic prefilter in front of the exact set: Kirsch-Mitzenmacher
// double hashing, bit count m = ceil(-n ln p / (ln 2)^2) and
// k = max(1, round(m/n * ln 2)) for n expected elements at target false
// positive rate p. Never produces false negatives (inserted keys always
// hit); every positive is confirmed against the exact set.
struct BloomFilter {
  uint64_t bit_count = 0;
  uint32_t hash_count = 0;
  std::vector<uint64_t> words;

  static BloomFilter sized_for(uint64_t n_elements, double target_fpr);
  void insert(uint64_t key);
  bool might_contain(uint64_t key) const;
};

// Exact membership structure over every n-gram hash of a corpus: a sorted
// unique array (binary search lookups), so memory stays proportional to the
// number of distinct n-grams. The optional Bloom filter short-circuits
// misses; results are identical with it on or off.
struct NgramIndex {
  uint32_t n = 8;
  uint64_t doc_count = 0;
  std::vector<uint64_t> hashes;  // sorted, unique
  std::optional<BloomFilter> bloom;

  uint64_t ngram_count() const { return hashes.size(); }
  bool contains(uint64_t hash) const;
};

struct BloomConfig {
  double target_fpr = 0.01;
};

// Documents shorter than n tokens contribute nothing; a doc of t >= n
// tokens contributes t-n+1 windows.
NgramIndex build_index(const Corpus& corpus, uint32_t n = 8,
                       std::optional<BloomConfig> bloom = BloomConfig{});

// Binary format: magic, version, n, doc count, hash count, bloom geometry,
// then the sorted hashes and bloom words, all little-endian.
void save_index(const NgramIndex& index, const std::string& path);
NgramIndex load_index(const std::string& path);

struct SampleOverlap {
  bool flagged = false;
  uint64_t matched_windows = 0;
  // Token offset of the first matching window, when flagged.
  std::optional<size_t> first_match;
};

struct OverlapReport {
  uint32_t n = 8;
  std::map<std::string, SampleOverlap> per_sample;
  double detection_rate = 0.0;  // flagged / samples
};

// A sample is contaminated as soon as one n-gram of normalize_tokenize
// (question + " " + answer) appears in the index.
OverlapReport scan_benchmark(const NgramIndex& index, const Benchmark& benchmark);
SampleOverlap scan_sample(const NgramIndex& index, const Sample& sample);

nlohmann::json overlap_report_to_json(const OverlapReport& r);

// Token-set Jaccard candidates for the LLM decontaminator; scores sorted
// descending, ties broken by ascending doc id. At most top_k entries.
struct Candidate {
  std::string doc_id;
  double jaccard = 0.0;
  size_t doc_index = 0;  // into corpus.documents
};

std::vector<Candidate> prefilter_candidates(const Sample& sample, const Corpus& corpus,
                                            size_t top_k = 32);

// One YES/NO judgment per candidate pair. The verdict is true iff the first
// reply line, trimmed, uppercased and with trailing '.'/'!' stripped, reads
// YES; NO parses as a clean negative; anything else is verdict false with
// parse_failure set.
struct DecontaminatorProfile {
  std::string system_prompt;   // may be empty
  std::string user_template;   // must contain {{text_a}} and {{text_b}}
};

DecontaminatorProfile load_decontaminator_profile(const std::string& path);

struct DecontaminatorVerdict {
  std::string sample_id;
  std::string doc_id;
  double jaccard = 0.0;
  bool is_rephrase = false;
  bool parse_failure = false;
  std::string raw_reply;
};

std::vector<DecontaminatorVerdict> llm_decontaminate(
    const Sample& sample, const std::vector<Candidate>& candidates, const Corpus& corpus,
    LlmClient& client, const DecontaminatorProfile& profile, const std::string& model_id,
    int max_tokens = 8);

nlohmann::json verdict_to_json(const DecontaminatorVerdict& v);

}  // namespace contamkit
