#pragma once

#include <stdexcept>
#include <string>

namespace mmsd {

// Error categories map onto the CLI exit codes: usage -> 1, data -> 2,
// numeric -> 3. Library code throws; the front-end translates.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace mmsd
