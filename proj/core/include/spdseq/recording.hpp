#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "spdseq/errors.hpp"

namespace spdseq {

/// Epoch length in seconds and one-second segments per epoch.
inline constexpr int kEpochSeconds = 30;
inline constexpr int kSegmentsPerEpoch = 30;

/// A multichannel recording: n signals over T samples with one class label
/// per 30-second epoch. fs must exceed 90 Hz so the 45 Hz band edge stays
/// below Nyquist.
struct Recording {
    std::string id;
    int fs = 0;
    Eigen::MatrixXd signals;  // n x T
    std::vector<int> labels;  // one per epoch

    int num_signals() const { return static_cast<int>(signals.rows()); }
    int num_samples() const { return static_cast<int>(signals.cols()); }
    int num_epochs() const { return static_cast<int>(labels.size()); }

    /// Checks T == 30 * fs * epochs, n >= 2, fs > 90.
    void validate() const;
};

/// On-disk layout: a directory holding a key=value header (id, fs, n,
/// epochs, labels) and a row-major little-endian f64 signal file.
inline constexpr const char* kRecordingHeaderFile = "recording.txt";
inline constexpr const char* kRecordingSignalFile = "signals.f64";

void write_recording(const std::filesystem::path& dir, const Recording& rec);
Recording read_recording(const std::filesystem::path& dir);

/// Toy ingestion: a numeric CSV with one row per sample and one column per
/// signal; fs and labels are supplied by the caller.
Recording recording_from_csv(const std::string& id, int fs,
                             const std::filesystem::path& csv_path,
                             const std::vector<int>& labels);

} // namespace spdseq
