#include "spdseq/synthetic.hpp"

#include <cmath>
#include <string>

#include "spdseq/filters.hpp"
#include "spdseq/rng.hpp"

namespace spdseq {

namespace {

struct ClassProfile {
    Eigen::MatrixXd mixing;       // n x n
    Eigen::MatrixXd band_gains;   // bands x n
};

// Each class concentrates power in a rotating band per signal, plus mild
// random variation, so covariance structure and spectra both separate the
// classes without making the task trivial for a single signal.
std::vector<ClassProfile> make_class_profiles(const SyntheticSpec& spec, int bands) {
    Rng rng(Rng::derive(spec.seed, 0xC1A55));
    std::vector<ClassProfile> profiles;
    profiles.reserve(static_cast<std::size_t>(spec.classes));
    const int n = spec.signals;
    for (int c = 0; c < spec.classes; ++c) {
        ClassProfile p;
        p.mixing = Eigen::MatrixXd::Identity(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                p.mixing(i, j) += 0.45 * rng.normal() / std::sqrt(static_cast<double>(n));
            }
        }
        p.band_gains.resize(bands, n);
        for (int b = 0; b < bands; ++b) {
            for (int i = 0; i < n; ++i) {
                const bool dominant = b == (c + i) % bands;
                p.band_gains(b, i) = (dominant ? 2.5 : 0.25) + 0.3 * rng.uniform();
            }
        }
        profiles.push_back(std::move(p));
    }
    return profiles;
}

std::vector<int> make_labels(const SyntheticSpec& spec, Rng& rng) {
    const int e = spec.epochs_per_recording;
    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(e));
    // Exact proportions: base count per class, remainder to the lowest ids.
    const int base = e / spec.classes;
    const int rem = e % spec.classes;
    for (int c = 0; c < spec.classes; ++c) {
        const int count = base + (c < rem ? 1 : 0);
        for (int i = 0; i < count; ++i) labels.push_back(c);
    }
    rng.shuffle(labels);
    return labels;
}

} // namespace

std::vector<Recording> generate_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.classes < 2) throw ConfigError("synthetic: need at least 2 classes");
    if (spec.recordings < 1) throw ConfigError("synthetic: need at least 1 recording");
    if (spec.epochs_per_recording < 1) throw ConfigError("synthetic: need at least 1 epoch");
    if (spec.signals < 2) throw ConfigError("synthetic: need at least 2 signals");
    if (spec.fs <= 90) throw ConfigError("synthetic: fs must exceed 90 Hz");

    const FilterBank bank = FilterBank::standard();
    const int bands = static_cast<int>(bank.bands.size());
    const auto profiles = make_class_profiles(spec, bands);
    std::vector<BiquadCascade> cascades;
    cascades.reserve(static_cast<std::size_t>(bands));
    for (const auto& [low, high] : bank.bands) {
        cascades.push_back(design_bandpass(low, high, spec.fs, bank.order));
    }

    const int n = spec.signals;
    const long epoch_len = static_cast<long>(kEpochSeconds) * spec.fs;
    const long t_total = epoch_len * spec.epochs_per_recording;

    std::vector<Recording> out;
    out.reserve(static_cast<std::size_t>(spec.recordings));
    for (int r = 0; r < spec.recordings; ++r) {
        Rng rng(Rng::derive(spec.seed, 1000 + static_cast<std::uint64_t>(r)));

        Recording rec;
        rec.id = "synth" + std::to_string(r);
        rec.fs = spec.fs;
        rec.labels = make_labels(spec, rng);

        // Inter-recording variability: a per-signal gain perturbation.
        Eigen::VectorXd gains(n);
        for (int i = 0; i < n; ++i) gains(i) = 1.0 + 0.12 * rng.normal();

        // Continuous band-limited noise per (signal, band), filtered once
        // over the whole recording so epoch boundaries carry no transients.
        std::vector<std::vector<std::vector<double>>> band_noise(
            static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            band_noise[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(bands));
            for (int b = 0; b < bands; ++b) {
                std::vector<double> white(static_cast<std::size_t>(t_total));
                for (auto& v : white) v = rng.normal();
                band_noise[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] =
                    apply_filter(cascades[static_cast<std::size_t>(b)], white);
            }
        }

        rec.signals.resize(n, t_total);
        Eigen::VectorXd source(n);
        for (int e = 0; e < spec.epochs_per_recording; ++e) {
            const ClassProfile& p = profiles[static_cast<std::size_t>(rec.labels[e])];
            for (long t = e * epoch_len; t < (e + 1) * epoch_len; ++t) {
                for (int i = 0; i < n; ++i) {
                    double v = 0.2 * rng.normal();  // broadband floor
                    for (int b = 0; b < bands; ++b) {
                        v += p.band_gains(b, i) *
                             band_noise[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)]
                                       [static_cast<std::size_t>(t)];
                    }
                    source(i) = v;
                }
                rec.signals.col(t) = gains.asDiagonal() * (p.mixing * source);
            }
        }
        rec.validate();
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace spdseq
