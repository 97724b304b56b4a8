#include "contamkit/detect_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "contamkit/error.hpp"
#include "contamkit/hash.hpp"

namespace contamkit {

uint64_t ngram_hash(const TokenSeq& tokens, size_t begin, size_t n) {
  uint64_t h = kFnv64OffsetBasis;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) h = fnv1a64_step(h, 0x1f);
    h = fnv1a64(tokens[begin + i], h);
  }
  return h;
}

BloomFilter BloomFilter::sized_for(uint64_t n_elements, double target_fpr) {
  if (!(target_fpr > 0.0) || target_fpr >= 1.0) {
    throw Error(ErrorCode::parameter, "bloom target_fpr must lie in (0, 1)");
  }
  if (n_elements == 0) n_elements = 1;
  const double ln2 = std::log(2.0);
  double bits = std::ceil(-static_cast<double>(n_elements) * std::log(target_fpr) /
                          (ln2 * ln2));
  BloomFilter f;
  f.bit_count = static_cast<uint64_t>(std::max(bits, 64.0));
  f.hash_count = static_cast<uint32_t>(std::max(
      1.0, std::round(static_cast<double>(f.bit_count) /
                      static_cast<double>(n_elements) * ln2)));
  f.words.assign((f.bit_count + 63) / 64, 0);
  return f;
}

void BloomFilter::insert(uint64_t key) {
  uint64_t h1 = key;
  uint64_t h2 = splitmix64(key) | 1;  // odd stride
  for (uint32_t i = 0; i < hash_count; ++i) {
    uint64_t bit = (h1 + i * h2) % bit_count;
    words[bit >> 6] |= uint64_t{1} << (bit & 63);
  }
}

bool BloomFilter::might_contain(uint64_t key) const {
  uint64_t h1 = key;
  uint64_t h2 = splitmix64(key) | 1;
  for (uint32_t i = 0; i < hash_count; ++i) {
    uint64_t bit = (h1 + i * h2) % bit_count;
    if (!(words[bit >> 6] & (uint64_t{1} << (bit & 63)))) return false;
  }
  return true;
}

bool NgramIndex::contains(uint64_t hash) const {
  if (bloom && !bloom->might_contain(hash)) return false;
  return std::binary_search(hashes.begin(), hashes.end(), hash);
}

NgramIndex build_index(const Corpus& corpus, uint32_t n, std::optional<BloomConfig> bloom) {
  if (n < 1) throw Error(ErrorCode::parameter, "ngram n must be >= 1");
  NgramIndex index;
  index.n = n;
  index.doc_count = corpus.documents.size();
  for (const Sample& doc : corpus.documents) {
    TokenSeq tokens = normalize_tokenize(doc.question + " " + doc.answer);
    if (tokens.size() < n) continue;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
      index.hashes.push_back(ngram_hash(tokens, i, n));
    }
  }
  std::sort(index.hashes.begin(), index.hashes.end());
  index.hashes.erase(std::unique(index.hashes.begin(), index.hashes.end()),
                     index.hashes.end());
  if (bloom) {
    BloomFilter f = BloomFilter::sized_for(index.hashes.size(), bloom->target_fpr);
    for (uint64_t h : index.hashes) f.insert(h);
    index.bloom = std::move(f);
  }
  return index;
}

namespace {

constexpr char kMagic[8] = {'C', 'K', 'N', 'G', 'R', 'I', 'D', 'X'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorCode::parse, "truncated index file", path);
  }
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw Error(ErrorCode::parse, "truncated index file", path);
  }
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_index(const NgramIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open index file for writing", path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, index.n);
  put_u64(out, index.doc_count);
  put_u64(out, index.hashes.size());
  put_u32(out, index.bloom ? 1 : 0);
  if (index.bloom) {
    put_u64(out, index.bloom->bit_count);
    put_u32(out, index.bloom->hash_count);
  }
  for (uint64_t h : index.hashes) put_u64(out, h);
  if (index.bloom) {
    for (uint64_t w : index.bloom->words) put_u64(out, w);
  }
  if (!out) throw Error(ErrorCode::io, "write failed", path);
}

NgramIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open index file", path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw Error(ErrorCode::parse, "not an n-gram index file (bad magic)", path);
  }
  uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw Error(ErrorCode::parse, "unsupported index version " + std::to_string(version),
                path);
  }
  NgramIndex index;
  index.n = get_u32(in, path);
  index.doc_count = get_u64(in, path);
  uint64_t count = get_u64(in, path);
  bool has_bloom = get_u32(in, path) != 0;
  uint64_t bloom_bits = 0;
  uint32_t bloom_hashes = 0;
  if (has_bloom) {
    bloom_bits = get_u64(in, path);
    bloom_hashes = get_u32(in, path);
  }
  index.hashes.resize(count);
  for (uint64_t i = 0; i < count; ++i) index.hashes[i] = get_u64(in, path);
  if (!std::is_sorted(index.hashes.begin(), index.hashes.end())) {
    throw Error(ErrorCode::invariant, "index hashes are not sorted", path);
  }
  if (has_bloom) {
    BloomFilter f;
    f.bit_count = bloom_bits;
    f.hash_count = bloom_hashes;
    f.words.resize((bloom_bits + 63) / 64);
    for (uint64_t& w : f.words) w = get_u64(in, path);
    index.bloom = std::move(f);
  }
  return index;
}

SampleOverlap scan_sample(const NgramIndex& index, const Sample& sample) {
  SampleOverlap overlap;
  TokenSeq tokens = normalize_tokenize(sample.question + " " + sample.answer);
  if (tokens.size() < index.n) return overlap;  // no windows, not flagged
  for (size_t i = 0; i + index.n <= tokens.size(); ++i) {
    if (index.contains(ngram_hash(tokens, i, index.n))) {
      ++overlap.matched_windows;
      if (!overlap.first_match) overlap.first_match = i;
    }
  }
  overlap.flagged = overlap.matched_windows > 0;
  return overlap;
}

OverlapReport scan_benchmark(const NgramIndex& index, const Benchmark& benchmark) {
  OverlapReport report;
  report.n = index.n;
  size_t flagged = 0;
  for (const Sample& s : benchmark.samples) {
    SampleOverlap overlap = scan_sample(index, s);
    if (overlap.flagged) ++flagged;
    report.per_sample.emplace(s.id, overlap);
  }
  report.detection_rate = benchmark.samples.empty()
                              ? 0.0
                              : static_cast<double>(flagged) /
                                    static_cast<double>(benchmark.samples.size());
  return report;
}

nlohmann::json overlap_report_to_json(const OverlapReport& r) {
  nlohmann::json per_sample = nlohmann::json::object();
  for (const auto& [id, o] : r.per_sample) {
    nlohmann::json e = {{"flagged", o.flagged}, {"matched_windows", o.matched_windows}};
    if (o.first_match) e["first_match"] = *o.first_match;
    per_sample[id] = e;
  }
  return {{"n", r.n}, {"detection_rate", r.detection_rate}, {"per_sample", per_sample}};
}

std::vector<Candidate> prefilter_candidates(const Sample& sample, const Corpus& corpus,
                                            size_t top_k) {
  if (top_k == 0) throw Error(ErrorCode::parameter, "top_k must be >= 1");
  TokenSeq sample_tokens = normalize_tokenize(sample.question + " " + sample.answer);
  std::unordered_set<std::string> sample_set(sample_tokens.begin(), sample_tokens.end());

  std::vector<Candidate> all;
  all.reserve(corpus.documents.size());
  for (size_t d = 0; d < corpus.documents.size(); ++d) {
    const Sample& doc = corpus.documents[d];
    TokenSeq doc_tokens = normalize_tokenize(doc.question + " " + doc.answer);
    std::unordered_set<std::string> doc_set(doc_tokens.begin(), doc_tokens.end());
    size_t inter = 0;
    for (const std::string& t : doc_set) inter += sample_set.count(t);
    size_t uni = sample_set.size() + doc_set.size() - inter;
    double j = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    all.push_back({doc.id, j, d});
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.jaccard != b.jaccard) return a.jaccard > b.jaccard;
    return a.doc_id < b.doc_id;
  });
  if (all.size() > top_k) all.resize(top_k);
  return all;
}

DecontaminatorProfile load_decontaminator_profile(const std::string& path) {
  SectionFile sections = load_section_file(path);
  DecontaminatorProfile p;
  if (auto it = sections.find("SYSTEM"); it != sections.end()) p.system_prompt = it->second;
  p.user_template = require_section(sections, "USER_TEMPLATE", path);
  if (p.user_template.find("{{text_a}}") == std::string::npos ||
      p.user_template.find("{{text_b}}") == std::string::npos) {
    throw Error(ErrorCode::config,
                "decontaminator USER_TEMPLATE needs {{text_a}} and {{text_b}}", path);
  }
  return p;
}

namespace {

// First line, trimmed, uppercased, trailing '.'/'!' stripped.
std::string verdict_token(const std::string& reply) {
  std::string line = reply.substr(0, reply.find('\n'));
  size_t b = line.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = line.find_last_not_of(" \t\r");
  line = line.substr(b, e - b + 1);
  while (!line.empty() && (line.back() == '.' || line.back() == '!')) line.pop_back();
  for (char& c : line) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 32);
  }
  return line;
}

}  // namespace

std::vector<DecontaminatorVerdict> llm_decontaminate(
    const Sample& sample, const std::vector<Candidate>& candidates, const Corpus& corpus,
    LlmClient& client, const DecontaminatorProfile& profile, const std::string& model_id,
    int max_tokens) {
  std::string text_a = sample.question + " " + sample.answer;
  std::vector<DecontaminatorVerdict> out;
  out.reserve(candidates.size());
  for (const Candidate& c : candidates) {
    if (c.doc_index >= corpus.documents.size() ||
        corpus.documents[c.doc_index].id != c.doc_id) {
      throw Error(ErrorCode::invariant, "candidate does not match corpus", c.doc_id);
    }
    const Sample& doc = corpus.documents[c.doc_index];
    std::string text_b = doc.question.empty() ? doc.answer : doc.question + " " + doc.answer;

    ChatRequest req;
    req.model_id = model_id;
    if (!profile.system_prompt.empty()) req.system_prompt = profile.system_prompt;
    std::string user = substitute_placeholder(profile.user_template, "text_a", text_a);
    user = substitute_placeholder(std::move(user), "text_b", text_b);
    req.messages.push_back({Role::user, user});
    req.temperature = 0.0;
    req.max_tokens = max_tokens;

    ChatResponse resp = client.chat(req);
    DecontaminatorVerdict v;
    v.sample_id = sample.id;
    v.doc_id = c.doc_id;
    v.jaccard = c.jaccard;
    v.raw_reply = resp.text;
    std::string token = verdict_token(resp.text);
    if (token == "YES") {
      v.is_rephrase = true;
    } else if (token != "NO") {
      v.parse_failure = true;  // verdict stays false
    }
    out.push_back(std::move(v));
  }
  return out;
}

nlohmann::json verdict_to_json(const DecontaminatorVerdict& v) {
  return {{"sample_id", v.sample_id},   {"doc_id", v.doc_id},
          {"jaccard", v.jaccard},       {"is_rephrase", v.is_rephrase},
          {"parse_failure", v.parse_failure}, {"raw_reply", v.raw_reply}};
}

}  // namespace contamkit
