#include "contamkit/profile.hpp"

#include <fstream>
#include <sstream>

#include "contamkit/error.hpp"

namespace contamkit {

namespace {

bool is_header(const std::string& line, std::string& name) {
  size_t b = line.find_first_not_of(" \t");
  if (b == std::string::npos || line[b] != '[') return false;
  size_t e = line.find_last_not_of(" \t\r");
  if (e == std::string::npos || line[e] != ']' || e <= b + 1) return false;
  name = line.substr(b + 1, e - b - 1);
  return true;
}

void strip_trailing_blank(std::string& body) {
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r' ||
                           body.back() == ' ' || body.back() == '\t')) {
    body.pop_back();
  }
}

}  // namespace

SectionFile parse_section_file(std::string_view text, const std::string& name) {
  SectionFile out;
  std::istringstream in{std::string(text)};
  std::string line, section, body;
  size_t lineno = 0;
  auto flush = [&] {
    if (section.empty()) return;
    strip_trailing_blank(body);
    if (!out.emplace(section, body).second) {
      throw Error(ErrorCode::parse, "duplicate section [" + section + "]", name);
    }
    body.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string header;
    if (is_header(line, header)) {
      flush();
      section = header;
      continue;
    }
    if (section.empty()) {
      size_t b = line.find_first_not_of(" \t");
      if (b != std::string::npos && line[b] != '#') {
        throw Error(ErrorCode::parse,
                    "content before the first [SECTION] header (line " +
                        std::to_string(lineno) + ")",
                    name);
      }
      continue;
    }
    body += line;
    body += '\n';
  }
  flush();
  if (out.empty()) {
    throw Error(ErrorCode::parse, "profile file has no sections", name);
  }
  return out;
}

SectionFile load_section_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open profile file", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_section_file(buf.str(), path);
}

const std::string& require_section(const SectionFile& sections, const std::string& key,
                                   const std::string& where) {
  auto it = sections.find(key);
  if (it == sections.end()) {
    throw Error(ErrorCode::config, "profile lacks required section [" + key + "]", where);
  }
  return it->second;
}

std::string substitute_placeholder(std::string text, std::string_view key,
                                   std::string_view value) {
  std::string needle = "{{" + std::string(key) + "}}";
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace contamkit
