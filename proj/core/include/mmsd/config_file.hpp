#pragma once

#include <map>
#include <string>

namespace mmsd {

// Flat key-value config text. One "key = value" pair per line, '#' starts a
// comment, values may be quoted. Later keys override earlier ones.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

std::string format_config(const std::map<std::string, std::string>& kv);

}  // namespace mmsd
