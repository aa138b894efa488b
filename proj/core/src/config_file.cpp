#include "mmsd/config_file.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "mmsd/errors.hpp"

namespace mmsd {

namespace {

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
        if (!ok) return false;
    }
    return true;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // '#' inside a quoted value is literal
            size_t q1 = line.find('"');
            if (q1 == std::string::npos || q1 > hash) line = line.substr(0, hash);
        }
        std::string s = strip(line);
        if (s.empty()) continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) +
                             ": expected key = value");
        std::string key = strip(s.substr(0, eq));
        std::string val = unquote(strip(s.substr(eq + 1)));
        if (!valid_key(key))
            throw UsageError("config line " + std::to_string(lineno) +
                             ": bad key '" + key + "'");
        kv[key] = val;
    }
    return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string format_config(const std::map<std::string, std::string>& kv) {
    std::ostringstream out;
    for (const auto& [k, v] : kv) {
        // quote so the emitted text parses back to the same value
        bool quote = v.find('#') != std::string::npos ||
                     (!v.empty() && (std::isspace((unsigned char)v.front()) ||
                                     std::isspace((unsigned char)v.back()) ||
                                     v.front() == '"' || v.front() == '\''));
        if (quote)
            out << k << " = \"" << v << "\"\n";
        else
            out << k << " = " << v << "\n";
    }
    return out.str();
}

}  // namespace mmsd
