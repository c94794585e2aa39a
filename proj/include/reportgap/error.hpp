#pragma once

#include <stdexcept>
#include <string>

namespace reportgap {

/// Invalid run configuration (unknown key, bad value, unresolvable path).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a table contract (missing column, bad date, unknown code).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Estimation failed numerically (rank deficiency, non-convergence, degenerate variance).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace reportgap
