#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace laylens {

using Bytes = std::vector<std::uint8_t>;

/// SHA-256 of `data` as 32 raw bytes.
std::vector<std::uint8_t> sha256(std::span<const std::uint8_t> data);

/// SHA-256 of `data` as 64 lowercase hex characters.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view data);

/// `n_bytes` of cryptographic randomness, hex encoded.
std::string random_hex(std::size_t n_bytes);

bool is_lower_hex(std::string_view s, std::size_t expected_len);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws ValidationError on malformed input.
Bytes base64_decode(std::string_view text);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(std::span<const std::uint8_t> b) {
  return std::string(b.begin(), b.end());
}

}  // namespace laylens
