#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace contamkit {

using TokenSeq = std::vector<std::string>;

// ASCII-folding normalizer shared by every text metric and the n-gram
// scanner: uppercase A-Z maps to lowercase, every byte outside [0-9a-z]
// (including each byte of a multibyte UTF-8 sequence) acts as a separator.
// Locale-free and deterministic; tokens are maximal ASCII-alphanumeric runs.
TokenSeq normalize_tokenize(std::string_view text);

// Same folding rule applied in place of full-string lowering (used for the
// lowercase-perplexity variant so one folding rule exists everywhere).
std::string ascii_lower(std::string_view text);

// Longest common subsequence length over token sequences.
// O(|a|*|b|) time, O(min(|a|,|b|)) memory.
size_t lcs_len(const TokenSeq& a, const TokenSeq& b);

// ROUGE-L F1 between normalized token sequences; 0 when either side is
// empty or precision+recall is 0.
double rouge_l_tokens(const TokenSeq& candidate, const TokenSeq& reference);
double rouge_l(std::string_view candidate, std::string_view reference);

// Last maximal number in the text, canonicalized as a decimal string:
// thousands commas stripped, redundant zeros trimmed, "-0" folded to "0".
// A number is [sign]digits[,ddd]*[.digits]; a sign counts only when
// preceded by whitespace/start and followed by a digit, so "5-3" yields
// "3" while "is -4" yields "-4". "3/4" yields "4" ('/' separates).
// Returns nullopt when the text contains no digits.
std::optional<std::string> extract_final_number(std::string_view text);

// Canonical-decimal-string to double (for the optional epsilon comparison).
double decimal_value(const std::string& canonical);

}  // namespace contamkit
