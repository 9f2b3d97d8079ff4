// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "advreg/models.hpp"

namespace advreg {

/// A bundle plus the fingerprint of the world it was trained for.
struct Checkpoint {
  ModelBundle bundle;
  std::string spec_hash;
};

/// Binary layout, all integers little-endian:
///
///   magic      8 bytes  "ADVRGCK1"
///   version    u32      1
///   spec_hash  u32 length + bytes
///   count      u32      number of parameters
///   per parameter:
///     name      u32 length + bytes
///     tag       u8   0=F_PARAMS 1=G_PARAMS 2=H_PARAMS 3=FQ_PARAMS
///     rank      u32
///     dims      u64 x rank
///     values    f64 x prod(dims), IEEE-754, row-major
///   checksum   u64      FNV-1a of every preceding byte
std::string checkpoint_bytes(const ModelBundle& bundle, const std::string& spec_hash);
Checkpoint checkpoint_from_bytes(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                      const std::string& spec_hash);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Fingerprint of a bundle's parameters (names, tags, shapes, exact values).
std::string bundle_hash(const ModelBundle& bundle);

}  // namespace advreg
