#include "contamkit/textmetrics.hpp"

#include <algorithm>
#include <cstdlib>

namespace contamkit {

namespace {

inline bool ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }

inline bool ascii_alnum_lower(unsigned char c, unsigned char& out) {
  if (c >= 'A' && c <= 'Z') { out = static_cast<unsigned char>(c + 32); return true; }
  if ((c >= 'a' && c <= 'z') || ascii_digit(c)) { out = c; return true; }
  return false;
}

}  // namespace

TokenSeq normalize_tokenize(std::string_view text) {
  TokenSeq out;
  std::string cur;
  for (unsigned char c : text) {
    unsigned char low;
    if (ascii_alnum_lower(c, low)) {
      cur.push_back(static_cast<char>(low));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  }
  return out;
}

size_t lcs_len(const TokenSeq& a, const TokenSeq& b) {
  const TokenSeq& cols = a.size() <= b.size() ? a : b;  // shorter side is the row
  const TokenSeq& rows = a.size() <= b.size() ? b : a;
  if (cols.empty()) return 0;
  std::vector<size_t> row(cols.size() + 1, 0);
  for (const std::string& r : rows) {
    size_t diag = 0;  // row[j-1] from the previous iteration
    for (size_t j = 1; j <= cols.size(); ++j) {
      size_t up = row[j];
      row[j] = (r == cols[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[cols.size()];
}

double rouge_l_tokens(const TokenSeq& candidate, const TokenSeq& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double lcs = static_cast<double>(lcs_len(candidate, reference));
  double precision = lcs / static_cast<double>(candidate.size());
  double recall = lcs / static_cast<double>(reference.size());
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l_tokens(normalize_tokenize(candidate), normalize_tokenize(reference));
}

namespace {

// Canonicalize a matched slice: drop commas/sign noise, trim zeros.
std::string canonicalize_number(std::string_view slice) {
  bool negative = false;
  size_t i = 0;
  if (i < slice.size() && (slice[i] == '+' || slice[i] == '-')) {
    negative = slice[i] == '-';
    ++i;
  }
  std::string int_part, frac_part;
  bool in_frac = false;
  for (; i < slice.size(); ++i) {
    char c = slice[i];
    if (c == ',') continue;
    if (c == '.') { in_frac = true; continue; }
    (in_frac ? frac_part : int_part).push_back(c);
  }
  size_t nz = int_part.find_first_not_of('0');
  int_part = (nz == std::string::npos) ? "0" : int_part.substr(nz);
  size_t last = frac_part.find_last_not_of('0');
  frac_part = (last == std::string::npos) ? "" : frac_part.substr(0, last + 1);
  std::string out = int_part;
  if (!frac_part.empty()) out += "." + frac_part;
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::optional<std::string> extract_final_number(std::string_view text) {
  std::optional<std::string> found;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    unsigned char c = text[i];
    size_t start = i;
    if (c == '+' || c == '-') {
      bool at_boundary = i == 0 || text[i - 1] == ' ' || text[i - 1] == '\t' ||
                         text[i - 1] == '\n' || text[i - 1] == '\r';
      if (at_boundary && i + 1 < n && ascii_digit(text[i + 1])) {
        ++i;  // consume the sign
      } else {
        ++i;
        continue;
      }
    } else if (!ascii_digit(c)) {
      ++i;
      continue;
    }
    // Integer digits.
    while (i < n && ascii_digit(text[i])) ++i;
    // Thousands groups: ",ddd" with exactly three digits (no fourth).
    while (i + 3 < n && text[i] == ',' && ascii_digit(text[i + 1]) &&
           ascii_digit(text[i + 2]) && ascii_digit(text[i + 3]) &&
           (i + 4 >= n || !ascii_digit(text[i + 4]))) {
      i += 4;
    }
    // Decimal fraction.
    if (i + 1 < n && text[i] == '.' && ascii_digit(text[i + 1])) {
      ++i;
      while (i < n && ascii_digit(text[i])) ++i;
    }
    found = canonicalize_number(text.substr(start, i - start));
  }
  return found;
}

double decimal_value(const std::string& canonical) {
  return std::strtod(canonical.c_str(), nullptr);
}

}  // namespace contamkit
