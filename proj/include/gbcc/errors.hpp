#pragma once

#include <stdexcept>
#include <string>

namespace gbcc {

// Exit-code mapping: config_error -> 2, data_error -> 3, numeric_error -> 4.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated operation precondition (caller bug, not user input).
struct contract_error : std::logic_error {
  explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Dimension mismatch between operands.
struct shape_error : std::logic_error {
  explicit shape_error(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace gbcc
