#pragma once

#include <stdexcept>
#include <string>

namespace gcdf {

// Base for everything this library throws on purpose.
struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents do not line up (e.g. matmul inner dimensions).
struct shape_error : error {
  explicit shape_error(const std::string& msg) : error(msg) {}
};

// A configuration value is out of range or inconsistent.
struct config_error : error {
  explicit config_error(const std::string& msg) : error(msg) {}
};

// A caller violated an operation's precondition.
struct contract_error : error {
  explicit contract_error(const std::string& msg) : error(msg) {}
};

// File format / filesystem problems.
struct io_error : error {
  explicit io_error(const std::string& msg) : error(msg) {}
};

// Training aborted (NaN loss and similar).
struct training_error : error {
  explicit training_error(const std::string& msg) : error(msg) {}
};

// An iterative numeric procedure produced non-finite values.
struct numeric_error : error {
  explicit numeric_error(const std::string& msg) : error(msg) {}
};

}  // namespace gcdf
