#pragma once

#include <stdexcept>

namespace crm {

// Input-file/data problems (missing, malformed, incompatible). Maps to CLI
// exit code 2; usage/config problems use std::invalid_argument (exit 1) and
// numerical failures NumericError (exit 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace crm
