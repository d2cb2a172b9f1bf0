// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace spatialsep {

// Exit-code taxonomy used by the CLI: UsageError -> 1, DataError -> 2,
// NumericError -> 3. Library preconditions throw std::invalid_argument,
// which the CLI also maps to 1.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spatialsep
