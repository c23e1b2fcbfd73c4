#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pibase {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(std::span<const std::uint8_t> bytes);
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws FormatError on malformed input.
Bytes base64_decode(std::string_view text);

Bytes random_bytes(std::size_t n);

inline Bytes to_bytes(std::string_view s) { return {s.begin(), s.end()}; }
inline std::string to_string(std::span<const std::uint8_t> b) { return {b.begin(), b.end()}; }

Bytes read_file(const std::string& path);
/// Write via a temporary file and rename.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace pibase
