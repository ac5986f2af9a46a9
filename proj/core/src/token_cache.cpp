#include "spdseq/token_cache.hpp"

#include <cstring>
#include <fstream>

namespace spdseq {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw CorruptCache("cache: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t strategy_tag(WhiteningStrategy s) {
    switch (s) {
        case WhiteningStrategy::DAW: return 0;
        case WhiteningStrategy::MAW: return 1;
        case WhiteningStrategy::WPA: return 2;
        case WhiteningStrategy::GLOBAL_COV: return 3;
    }
    return 0xFFFFFFFF;
}

WhiteningStrategy strategy_from_tag(std::uint32_t tag) {
    switch (tag) {
        case 0: return WhiteningStrategy::DAW;
        case 1: return WhiteningStrategy::MAW;
        case 2: return WhiteningStrategy::WPA;
        case 3: return WhiteningStrategy::GLOBAL_COV;
        default: throw CorruptCache("cache: unknown strategy tag");
    }
}

} // namespace

Eigen::MatrixXd TokenCache::epoch_tokens(int epoch) const {
    const int d = token_length();
    const std::size_t per_epoch = tokens_per_epoch();
    Eigen::MatrixXd out(static_cast<long>(per_epoch), d);
    const std::size_t base = static_cast<std::size_t>(epoch) * per_epoch * d;
    for (std::size_t row = 0; row < per_epoch; ++row) {
        for (int c = 0; c < d; ++c) {
            out(static_cast<long>(row), c) =
                static_cast<double>(payload[base + row * d + static_cast<std::size_t>(c)]);
        }
    }
    return out;
}

void cache_write(const std::filesystem::path& path, const TokenCache& cache) {
    const std::size_t expected = static_cast<std::size_t>(cache.epochs) *
                                 cache.tokens_per_epoch() *
                                 static_cast<std::size_t>(cache.token_length());
    if (cache.payload.size() != expected) {
        throw CorruptCache("cache_write: payload length inconsistent with header");
    }

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cache_write: cannot open " + tmp);
        out.write(kTokenCacheMagic, 8);
        put_u32(out, cache.version);
        put_u32(out, cache.n);
        put_u32(out, cache.k);
        put_u32(out, cache.m);
        put_u32(out, cache.premapped);
        put_u32(out, cache.channels);
        put_u32(out, cache.segments);
        put_u32(out, cache.epochs);
        put_u32(out, strategy_tag(cache.strategy));
        static_assert(sizeof(double) == 8);
        out.write(reinterpret_cast<const char*>(&cache.alpha), 8);
        out.write(reinterpret_cast<const char*>(cache.payload.data()),
                  static_cast<std::streamsize>(cache.payload.size() * sizeof(float)));
        if (!out) throw IoError("cache_write: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TokenCache cache_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cache_read: cannot open " + path.string());

    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kTokenCacheMagic, 8) != 0) {
        throw CorruptCache("cache_read: bad magic in " + path.string());
    }
    TokenCache cache;
    cache.version = get_u32(in);
    if (cache.version != 1) throw VersionMismatch("cache_read: unsupported version");
    cache.n = get_u32(in);
    cache.k = get_u32(in);
    cache.m = get_u32(in);
    cache.premapped = get_u32(in);
    cache.channels = get_u32(in);
    cache.segments = get_u32(in);
    cache.epochs = get_u32(in);
    cache.strategy = strategy_from_tag(get_u32(in));
    if (!in.read(reinterpret_cast<char*>(&cache.alpha), 8)) {
        throw CorruptCache("cache_read: truncated header");
    }
    if (cache.m != cache.n + cache.k) throw CorruptCache("cache_read: m != n + k");

    const std::size_t expected = static_cast<std::size_t>(cache.epochs) *
                                 cache.tokens_per_epoch() *
                                 static_cast<std::size_t>(cache.token_length());
    cache.payload.resize(expected);
    if (!in.read(reinterpret_cast<char*>(cache.payload.data()),
                 static_cast<std::streamsize>(expected * sizeof(float)))) {
        throw CorruptCache("cache_read: payload shorter than header promises");
    }
    // Trailing bytes mean the header lied about the payload length.
    char extra;
    if (in.read(&extra, 1)) throw CorruptCache("cache_read: payload longer than header promises");
    return cache;
}

TokenCache preprocess_recording(const Recording& rec, const EnrichmentConfig& cfg,
                                std::vector<Eigen::MatrixXd>* channel_means) {
    cfg.validate();
    const FilterBank bank = FilterBank::standard();
    const FilteredRecording filtered = filter_recording(rec, bank);
    const int channels = bank.channels();
    const int epochs = rec.num_epochs();
    const int n = rec.num_signals();
    const int m = n + cfg.k;
    const int d = m * (m + 1) / 2;

    TokenCache cache;
    cache.n = static_cast<std::uint32_t>(n);
    cache.k = static_cast<std::uint32_t>(cfg.k);
    cache.m = static_cast<std::uint32_t>(m);
    cache.channels = static_cast<std::uint32_t>(channels);
    cache.segments = kSegmentsPerEpoch;
    cache.epochs = static_cast<std::uint32_t>(epochs);
    cache.strategy = cfg.strategy;
    cache.alpha = cfg.alpha;
    cache.payload.assign(static_cast<std::size_t>(epochs) * cache.tokens_per_epoch() *
                             static_cast<std::size_t>(d),
                         0.0f);

    std::vector<EpochGrid> grids;
    grids.reserve(static_cast<std::size_t>(epochs));
    for (int e = 0; e < epochs; ++e) grids.push_back(build_epoch_grid(filtered, e, cfg));

    if (channel_means) channel_means->assign(static_cast<std::size_t>(channels),
                                             Eigen::MatrixXd());

    // Enrichment is per recording and channel: pool all segments of all
    // epochs for the channel, compute the whitening matrix, then enrich.
    for (int c = 0; c < channels; ++c) {
        std::vector<SpdMatrix> xs;
        std::vector<Eigen::MatrixXd> as;
        xs.reserve(static_cast<std::size_t>(epochs) * kSegmentsPerEpoch);
        as.reserve(xs.capacity());
        for (int e = 0; e < epochs; ++e) {
            for (int s = 0; s < kSegmentsPerEpoch; ++s) {
                xs.push_back(grids[static_cast<std::size_t>(e)].matrix(s, c));
                as.push_back(grids[static_cast<std::size_t>(e)].feature(s, c));
            }
        }
        const std::vector<SpdMatrix> enriched = enrich_recording_channel(xs, as, cfg);

        if (channel_means) {
            (*channel_means)[static_cast<std::size_t>(c)] =
                affine_invariant_mean(enriched).mat();
        }

        std::size_t idx = 0;
        for (int e = 0; e < epochs; ++e) {
            for (int s = 0; s < kSegmentsPerEpoch; ++s) {
                const Token tok = spd_to_token(enriched[idx++]);
                const std::size_t base =
                    (static_cast<std::size_t>(e) * cache.tokens_per_epoch() +
                     static_cast<std::size_t>(c) * kSegmentsPerEpoch +
                     static_cast<std::size_t>(s)) *
                    static_cast<std::size_t>(d);
                for (int v = 0; v < d; ++v) {
                    cache.payload[base + static_cast<std::size_t>(v)] =
                        static_cast<float>(tok.values(v));
                }
            }
        }
    }
    return cache;
}

} // namespace spdseq
