#pragma once

#include <map>
#include <string>
#include <string_view>

namespace contamkit {

// Plain-text prompt profiles: named sections introduced by a line holding
// only [NAME]; the section body is everything up to the next header with
// trailing blank lines stripped (interior blank lines survive). Lines
// before the first header must be blank or start with '#'; inside a
// section every character is literal.
using SectionFile = std::map<std::string, std::string>;

SectionFile load_section_file(const std::string& path);
SectionFile parse_section_file(std::string_view text, const std::string& name);

// Missing key -> Error(config) naming the section and file.
const std::string& require_section(const SectionFile& sections, const std::string& key,
                                   const std::string& where);

// Replaces every occurrence of {{key}}.
std::string substitute_placeholder(std::string text, std::string_view key,
                                   std::string_view value);

}  // namespace contamkit
