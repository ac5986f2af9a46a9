#pragma once

#include <Eigen/Dense>

#include <vector>

#include "spdseq/enrichment.hpp"
#include "spdseq/filters.hpp"
#include "spdseq/geometry.hpp"
#include "spdseq/recording.hpp"

namespace spdseq {

/// Z-score normalization: zero mean, unit population standard deviation.
std::vector<double> zscore(const std::vector<double>& signal);

/// Per-segment sample covariance matrices of one epoch of signals.
/// Input is n x (30*fs); each non-overlapping one-second segment yields a
/// covariance with divisor fs-1 and jitter 1e-6 * trace/n * I so rank
/// deficiencies still validate as SPD.
std::vector<SpdMatrix> segment_covariance(const Eigen::MatrixXd& epoch_signals, int fs);

/// Average of the one-sided periodogram over its frequency bins.
/// P[q] = (2 / (fs N)) |DFT(x)[q]|^2 with the DC and Nyquist bins carrying
/// factor 1 instead of 2.
double avg_psd(const std::vector<double>& segment, int fs);

/// Per-epoch grid of covariance matrices and feature matrices: S = 30
/// one-second segments by C = 7 channels (unfiltered + six bands), stored
/// channel-major to match the token sequence order.
struct EpochGrid {
    int epoch_index = 0;
    int segments = kSegmentsPerEpoch;
    int channels = 0;
    std::vector<SpdMatrix> matrices;         // channel-major: [c * S + s]
    std::vector<Eigen::MatrixXd> features;   // aligned with matrices, n x k

    const SpdMatrix& matrix(int segment, int channel) const {
        return matrices[static_cast<std::size_t>(channel) * segments + segment];
    }
    const Eigen::MatrixXd& feature(int segment, int channel) const {
        return features[static_cast<std::size_t>(channel) * segments + segment];
    }
};

/// A recording expanded into its C channel views (z-scored, then band
/// filtered). Filtering runs once over the whole recording so transients do
/// not restart at epoch boundaries.
struct FilteredRecording {
    int fs = 0;
    int num_epochs = 0;
    std::vector<Eigen::MatrixXd> channels;  // C matrices, each n x T
};

FilteredRecording filter_recording(const Recording& rec, const FilterBank& bank);

/// Grid for one epoch from a pre-filtered recording.
EpochGrid build_epoch_grid(const FilteredRecording& filtered, int epoch_index,
                           const EnrichmentConfig& cfg);

/// Convenience overload; filters the full recording on each call, so prefer
/// the FilteredRecording form in loops.
EpochGrid build_epoch_grid(const Recording& rec, int epoch_index, const FilterBank& bank,
                           const EnrichmentConfig& cfg);

} // namespace spdseq
