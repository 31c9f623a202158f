#include "crm/digest.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace crm {

std::string sha256_hex(const void* data, size_t len) {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, out, &out_len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256_hex: digest computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(out_len * 2);
    for (unsigned int i = 0; i < out_len; ++i) {
        s.push_back(hex[out[i] >> 4]);
        s.push_back(hex[out[i] & 0xf]);
    }
    return s;
}

std::string sha256_hex(const std::vector<uint8_t>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_hex(const std::string& text) { return sha256_hex(text.data(), text.size()); }

}  // namespace crm
