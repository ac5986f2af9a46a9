#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spdseq/enrichment.hpp"
#include "spdseq/pipeline.hpp"
#include "spdseq/tokenization.hpp"

namespace spdseq {

/// Pre-tokenized epochs of one recording, the unit of the on-disk cache.
///
/// Binary layout (all integers little-endian u32 unless noted):
///   magic            8 bytes  "SPDTOK1\0"
///   version          u32      currently 1
///   n                u32      signal count
///   k                u32      features per signal
///   m                u32      enriched matrix dim (n + k)
///   premapped        u32      0: tokens are d(m); reserved for mapped caches
///   C                u32      channels per epoch
///   S                u32      segments per epoch
///   epochs           u32
///   strategy         u32      0 DAW, 1 MAW, 2 WPA, 3 GLOBAL_COV
///   alpha            f64      augmentation factor
///   payload          epochs * S * C * d(m) f32, channel-major within epoch
struct TokenCache {
    std::uint32_t version = 1;
    std::uint32_t n = 0;
    std::uint32_t k = 0;
    std::uint32_t m = 0;
    std::uint32_t premapped = 0;
    std::uint32_t channels = 0;
    std::uint32_t segments = 0;
    std::uint32_t epochs = 0;
    WhiteningStrategy strategy = WhiteningStrategy::MAW;
    double alpha = 1.0;
    std::vector<float> payload;

    int token_length() const { return static_cast<int>(m) * (static_cast<int>(m) + 1) / 2; }
    std::size_t tokens_per_epoch() const {
        return static_cast<std::size_t>(channels) * segments;
    }

    /// All tokens of one epoch as rows of a (S*C) x d(m) double matrix,
    /// channel-major (all segments of channel 0 first).
    Eigen::MatrixXd epoch_tokens(int epoch) const;
};

inline constexpr char kTokenCacheMagic[8] = {'S', 'P', 'D', 'T', 'O', 'K', '1', '\0'};

/// Atomic write (temp file + rename).
void cache_write(const std::filesystem::path& path, const TokenCache& cache);
TokenCache cache_read(const std::filesystem::path& path);

/// Full preprocessing of one recording: filter bank, per-segment covariance,
/// per-channel enrichment, tokenization. Also reports the per-channel mean
/// of the enriched matrices when `channel_means` is non-null (used for the
/// heatmap export).
TokenCache preprocess_recording(const Recording& rec, const EnrichmentConfig& cfg,
                                std::vector<Eigen::MatrixXd>* channel_means = nullptr);

} // namespace spdseq
