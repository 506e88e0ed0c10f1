#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpnav/network.hpp"

namespace cpnav {

// Binary checkpoint layout (little-endian):
//   "CPNV1\0" | u32 text length | architecture text (UTF-8) |
//   raw f32 parameters, layer order, weights then bias | u32 CRC32 of all prior bytes
inline constexpr char kCheckpointMagic[6] = {'C', 'P', 'N', 'V', '1', '\0'};

std::string architecture_text(const Network& network);

std::vector<std::uint8_t> serialize_checkpoint(const Network& network);
Network deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& network, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

// Shared byte-level helpers.
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cpnav
