#pragma once

#include <cstdint>
#include <vector>

#include "spdseq/recording.hpp"

namespace spdseq {

/// Desk-scale stand-in for clinical sleep corpora. Each class is defined by
/// a ground-truth signal mixing matrix and a band-power profile applied to
/// seeded noise; each recording applies a per-recording gain perturbation
/// so whitening has real inter-recording variability to remove.
struct SyntheticSpec {
    int classes = 3;
    int recordings = 6;
    int epochs_per_recording = 120;
    int fs = 128;
    int signals = 4;
    std::uint64_t seed = 7;
};

/// Deterministic under the seed: the same spec yields byte-identical
/// recordings. Per-recording class histograms match the (uniform) requested
/// proportions exactly.
std::vector<Recording> generate_synthetic_dataset(const SyntheticSpec& spec);

} // namespace spdseq
