#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vred {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(const std::uint8_t* data, std::size_t len);
Digest sha256(const std::vector<std::uint8_t>& data);
std::string digest_hex(const Digest& d);

}  // namespace vred
