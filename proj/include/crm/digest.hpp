#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crm {

// SHA-256 hex digest (lowercase). Used for checkpoint provenance and
// determinism checks.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::vector<uint8_t>& bytes);
std::string sha256_hex(const std::string& text);

}  // namespace crm
