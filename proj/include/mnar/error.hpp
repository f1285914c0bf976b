#pragma once

#include <stdexcept>
#include <string>

namespace mnar {

// Malformed or inconsistent input data (CSV parse failures, invariant
// violations at ingestion, bad flag values).
struct input_error : std::runtime_error {
  explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

// The observation pattern does not support the requested operation
// (irregular masks, mixed adoption times where a single one is required).
struct pattern_error : std::runtime_error {
  explicit pattern_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: rank collapse of a penalized fit, singular Gram
// systems, non-finite inputs.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mnar
