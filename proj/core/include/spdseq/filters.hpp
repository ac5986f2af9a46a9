#pragma once

#include <array>
#include <utility>
#include <vector>

#include "spdseq/errors.hpp"

namespace spdseq {

/// One second-order section y[t] = b0 x[t] + b1 x[t-1] + b2 x[t-2]
///                                 - a1 y[t-1] - a2 y[t-2].
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// A cascade of biquads (a designed filter).
struct BiquadCascade {
    std::vector<Biquad> sections;

    /// Complex magnitude response at frequency hz for sampling rate fs.
    double magnitude(double hz, double fs) const;
};

/// Butterworth bandpass design via analog prototype, lowpass-to-bandpass
/// transform and bilinear transform with frequency pre-warping. Zeros land
/// exactly at z = 1 and z = -1, so DC and Nyquist are fully blocked; the
/// cascade gain is normalized to 1 at the geometric centre sqrt(low*high).
///
/// `order` is the analog prototype order; the bandpass has 2*order poles
/// realized as `order` second-order sections.
BiquadCascade design_bandpass(double low_hz, double high_hz, double fs, int order = 4);

/// Causal forward filtering with zero initial state; output length equals
/// input length.
std::vector<double> apply_filter(const BiquadCascade& cascade, const std::vector<double>& signal);

/// The six analysis bands, low-inclusive/high-exclusive, in Hz:
/// delta, theta, alpha, low beta, high beta, gamma.
struct FilterBank {
    std::vector<std::pair<double, double>> bands;
    int order = 4;

    static FilterBank standard();

    /// Channel count: one pass-through channel plus one per band.
    int channels() const { return static_cast<int>(bands.size()) + 1; }
};

} // namespace spdseq
