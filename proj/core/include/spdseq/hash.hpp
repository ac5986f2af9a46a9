#pragma once

#include <filesystem>
#include <string>

namespace spdseq {

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

/// SHA-256 of a file's contents (content hash used in run manifests).
std::string sha256_file(const std::filesystem::path& path);

} // namespace spdseq
