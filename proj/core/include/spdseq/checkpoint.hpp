#pragma once

#include <filesystem>
#include <vector>

#include "spdseq/autodiff.hpp"

namespace spdseq::ad {

/// Checkpoint file: 8-byte magic "SPDCKPT\0", u32 version, u32 parameter
/// count, then per parameter: u32 name length, name bytes, u32 rank,
/// u32 dims, little-endian f64 payload. Read-back is bit-exact.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<const Parameter*>& params);

/// Raw read of every parameter in file order.
std::vector<Parameter> read_checkpoint(const std::filesystem::path& path);

/// Loads values into existing parameters, matched by name; shapes must
/// agree and every parameter must be present.
void load_checkpoint(const std::filesystem::path& path, std::vector<Parameter*>& params);

} // namespace spdseq::ad
