// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace advreg {

/// 64-bit FNV-1a. Used for content fingerprints, not for security.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
/// fnv1a64 of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file and renames it over `path`, so a
/// failed write never clobbers an existing artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace advreg
