#pragma once

#include <stdexcept>
#include <string>

namespace lens {

// Caller broke a documented precondition (bad dimension, out-of-range value, ...).
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input is numerically unusable: zero norm where a direction is required,
// non-finite entries, degenerate span.
struct DegenerateInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file content. Carries the 1-based line number when known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg, long line = 0)
        : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_number(line) {}
    long line_number;
};

// An attention capture failed its internal consistency check (rows must be
// probability vectors).
struct CaptureIntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lens
