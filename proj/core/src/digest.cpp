#include "vred/digest.hpp"

#include <openssl/evp.h>

#include "vred/errors.hpp"

namespace vred {

Digest sha256(const std::uint8_t* data, std::size_t len) {
    Digest out{};
    unsigned int written = 0;
    if (EVP_Digest(data, len, out.data(), &written, EVP_sha256(), nullptr) != 1 ||
        written != out.size()) {
        throw InternalError("sha256 failed");
    }
    return out;
}

Digest sha256(const std::vector<std::uint8_t>& data) {
    return sha256(data.data(), data.size());
}

std::string digest_hex(const Digest& d) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (std::uint8_t b : d) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

}  // namespace vred
