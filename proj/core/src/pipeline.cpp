#include "spdseq/pipeline.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include "spdseq/fft.hpp"

namespace spdseq {

std::vector<double> zscore(const std::vector<double>& signal) {
    if (signal.size() < 2) throw DegenerateSignal("zscore: need at least 2 samples");
    const double n = static_cast<double>(signal.size());
    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : signal) var += (v - mean) * (v - mean);
    var /= n;  // population variance
    const double sd = std::sqrt(var);
    if (sd < 1e-12) throw DegenerateSignal("zscore: standard deviation below 1e-12");
    std::vector<double> out(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) / sd;
    return out;
}

std::vector<SpdMatrix> segment_covariance(const Eigen::MatrixXd& epoch_signals, int fs) {
    const int n = static_cast<int>(epoch_signals.rows());
    if (epoch_signals.cols() != static_cast<long>(kSegmentsPerEpoch) * fs) {
        std::ostringstream os;
        os << "segment_covariance: expected " << kSegmentsPerEpoch * fs << " samples, got "
           << epoch_signals.cols();
        throw DimensionMismatch(os.str());
    }
    if (fs < 2) throw DimensionMismatch("segment_covariance: need at least 2 samples per segment");

    constexpr double kJitter = 1e-6;
    std::vector<SpdMatrix> out;
    out.reserve(kSegmentsPerEpoch);
    for (int s = 0; s < kSegmentsPerEpoch; ++s) {
        Eigen::MatrixXd seg = epoch_signals.middleCols(static_cast<long>(s) * fs, fs);
        const Eigen::VectorXd mean = seg.rowwise().mean();
        seg.colwise() -= mean;
        Eigen::MatrixXd cov = (seg * seg.transpose()) / static_cast<double>(fs - 1);
        const double trace = cov.trace();
        if (trace < 1e-12) {
            std::ostringstream os;
            os << "segment_covariance: segment " << s << " has trace " << trace;
            throw DegenerateSegment(os.str());
        }
        cov += (kJitter * trace / n) * Eigen::MatrixXd::Identity(n, n);
        out.emplace_back(cov);
    }
    return out;
}

double avg_psd(const std::vector<double>& segment, int fs) {
    const std::size_t n = segment.size();
    if (n < 2) return 0.0;
    const auto spectrum = detail::fft_real(segment);
    const std::size_t half = n / 2;
    const double scale = 1.0 / (static_cast<double>(fs) * static_cast<double>(n));
    double sum = 0.0;
    std::size_t bins = 0;
    for (std::size_t q = 0; q <= half; ++q) {
        const double power = std::norm(spectrum[q]) * scale;
        const bool endpoint = (q == 0) || (2 * q == n);
        sum += endpoint ? power : 2.0 * power;
        ++bins;
    }
    return sum / static_cast<double>(bins);
}

FilteredRecording filter_recording(const Recording& rec, const FilterBank& bank) {
    rec.validate();
    const int n = rec.num_signals();
    const long t_total = rec.num_samples();

    FilteredRecording out;
    out.fs = rec.fs;
    out.num_epochs = rec.num_epochs();
    out.channels.reserve(static_cast<std::size_t>(bank.channels()));

    // Channel 0: z-scored unfiltered signals.
    Eigen::MatrixXd base(n, t_total);
    for (int i = 0; i < n; ++i) {
        std::vector<double> sig(static_cast<std::size_t>(t_total));
        for (long t = 0; t < t_total; ++t) sig[static_cast<std::size_t>(t)] = rec.signals(i, t);
        const auto z = zscore(sig);
        for (long t = 0; t < t_total; ++t) base(i, t) = z[static_cast<std::size_t>(t)];
    }
    out.channels.push_back(base);

    for (const auto& [low, high] : bank.bands) {
        const BiquadCascade cascade = design_bandpass(low, high, rec.fs, bank.order);
        Eigen::MatrixXd ch(n, t_total);
        for (int i = 0; i < n; ++i) {
            std::vector<double> sig(static_cast<std::size_t>(t_total));
            for (long t = 0; t < t_total; ++t) sig[static_cast<std::size_t>(t)] = base(i, t);
            const auto filtered = apply_filter(cascade, sig);
            for (long t = 0; t < t_total; ++t) ch(i, t) = filtered[static_cast<std::size_t>(t)];
        }
        out.channels.push_back(std::move(ch));
    }
    return out;
}

EpochGrid build_epoch_grid(const FilteredRecording& filtered, int epoch_index,
                           const EnrichmentConfig& cfg) {
    cfg.validate();
    if (epoch_index < 0 || epoch_index >= filtered.num_epochs) {
        throw ConfigError("build_epoch_grid: epoch index out of range");
    }
    const int fs = filtered.fs;
    const int n = static_cast<int>(filtered.channels.front().rows());
    const long offset = static_cast<long>(epoch_index) * kEpochSeconds * fs;

    EpochGrid grid;
    grid.epoch_index = epoch_index;
    grid.channels = static_cast<int>(filtered.channels.size());
    grid.matrices.reserve(static_cast<std::size_t>(grid.channels) * kSegmentsPerEpoch);
    grid.features.reserve(grid.matrices.capacity());

    for (const auto& channel : filtered.channels) {
        const Eigen::MatrixXd epoch = channel.middleCols(offset, kEpochSeconds * fs);
        auto covs = segment_covariance(epoch, fs);
        for (int s = 0; s < kSegmentsPerEpoch; ++s) {
            grid.matrices.push_back(std::move(covs[static_cast<std::size_t>(s)]));
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, cfg.k);
            if (cfg.k > 0 && cfg.feature_source == FeatureSource::AVG_PSD) {
                for (int i = 0; i < n; ++i) {
                    std::vector<double> seg(static_cast<std::size_t>(fs));
                    for (int t = 0; t < fs; ++t) {
                        seg[static_cast<std::size_t>(t)] =
                            epoch(i, static_cast<long>(s) * fs + t);
                    }
                    a(i, 0) = avg_psd(seg, fs);
                }
            }
            grid.features.push_back(std::move(a));
        }
    }
    return grid;
}

EpochGrid build_epoch_grid(const Recording& rec, int epoch_index, const FilterBank& bank,
                           const EnrichmentConfig& cfg) {
    return build_epoch_grid(filter_recording(rec, bank), epoch_index, cfg);
}

} // namespace spdseq
