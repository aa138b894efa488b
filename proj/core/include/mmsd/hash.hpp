#pragma once

#include <string>

namespace mmsd {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

}  // namespace mmsd
