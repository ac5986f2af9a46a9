#include "spdseq/filters.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

namespace spdseq {

namespace {

using Complex = std::complex<double>;

// Bilinear transform of an analog pole: z = (2fs + s) / (2fs - s).
Complex bilinear_pole(Complex s, double fs) {
    const double k = 2.0 * fs;
    return (Complex(k, 0.0) + s) / (Complex(k, 0.0) - s);
}

} // namespace

double BiquadCascade::magnitude(double hz, double fs) const {
    const double w = 2.0 * std::numbers::pi * hz / fs;
    const Complex z1 = std::polar(1.0, -w);  // z^{-1}
    const Complex z2 = z1 * z1;
    Complex h(1.0, 0.0);
    for (const auto& s : sections) {
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    }
    return std::abs(h);
}

BiquadCascade design_bandpass(double low_hz, double high_hz, double fs, int order) {
    if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0)) {
        std::ostringstream os;
        os << "design_bandpass: need 0 < low < high < fs/2, got [" << low_hz << ", "
           << high_hz << ") at fs " << fs;
        throw InvalidBand(os.str());
    }
    if (order < 1 || order % 2 != 0) {
        throw InvalidBand("design_bandpass: prototype order must be a positive even number");
    }

    // Pre-warp band edges so the digital edges land where requested.
    const double k = 2.0 * fs;
    const double warped_low = k * std::tan(std::numbers::pi * low_hz / fs);
    const double warped_high = k * std::tan(std::numbers::pi * high_hz / fs);
    const double w0_sq = warped_low * warped_high;
    const double bw = warped_high - warped_low;

    // Analog Butterworth lowpass prototype poles on the unit circle, left
    // half-plane, then lowpass-to-bandpass: each prototype pole p yields the
    // two roots of s^2 - (bw p) s + w0^2 = 0.
    std::vector<Complex> poles;
    poles.reserve(2 * static_cast<std::size_t>(order));
    for (int i = 0; i < order; ++i) {
        const double theta =
            std::numbers::pi * (2.0 * i + 1.0) / (2.0 * order) + std::numbers::pi / 2.0;
        const Complex proto = std::polar(1.0, theta);
        const Complex bp = bw * proto;
        const Complex disc = std::sqrt(bp * bp - 4.0 * w0_sq);
        poles.push_back((bp + disc) / 2.0);
        poles.push_back((bp - disc) / 2.0);
    }

    // Bilinear-map the poles and pair them into second-order sections.
    // Conjugate pairs are matched by taking each pole with positive
    // imaginary part together with its conjugate; leftover (nearly) real
    // poles are paired among themselves.
    std::vector<Complex> zpoles;
    zpoles.reserve(poles.size());
    for (const auto& p : poles) zpoles.push_back(bilinear_pole(p, fs));

    std::vector<Complex> upper, real_poles;
    for (const auto& zp : zpoles) {
        if (zp.imag() > 1e-12) {
            upper.push_back(zp);
        } else if (zp.imag() >= -1e-12) {
            real_poles.push_back(zp);
        }
    }
    std::sort(upper.begin(), upper.end(),
              [](const Complex& a, const Complex& b) { return a.real() < b.real(); });
    std::sort(real_poles.begin(), real_poles.end(),
              [](const Complex& a, const Complex& b) { return a.real() < b.real(); });

    BiquadCascade cascade;
    for (const auto& zp : upper) {
        Biquad s;
        s.b0 = 1.0; s.b1 = 0.0; s.b2 = -1.0;  // zeros exactly at z = +1 and z = -1
        s.a1 = -2.0 * zp.real();
        s.a2 = std::norm(zp);
        cascade.sections.push_back(s);
    }
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        Biquad s;
        s.b0 = 1.0; s.b1 = 0.0; s.b2 = -1.0;
        s.a1 = -(real_poles[i].real() + real_poles[i + 1].real());
        s.a2 = real_poles[i].real() * real_poles[i + 1].real();
        cascade.sections.push_back(s);
    }

    // Normalize the cascade to unit gain at the geometric centre frequency.
    const double centre = std::sqrt(low_hz * high_hz);
    const double mag = cascade.magnitude(centre, fs);
    if (!(mag > 0.0)) throw InvalidBand("design_bandpass: degenerate response at centre");
    const double gain = 1.0 / mag;
    const double per_section = std::pow(gain, 1.0 / static_cast<double>(cascade.sections.size()));
    for (auto& s : cascade.sections) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    return cascade;
}

std::vector<double> apply_filter(const BiquadCascade& cascade, const std::vector<double>& signal) {
    std::vector<double> out = signal;
    for (const auto& s : cascade.sections) {
        // Direct form II transposed, zero initial state.
        double z1 = 0.0, z2 = 0.0;
        for (double& v : out) {
            const double x = v;
            const double y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            v = y;
        }
    }
    return out;
}

FilterBank FilterBank::standard() {
    FilterBank bank;
    bank.bands = {{0.5, 4.0}, {4.0, 8.0}, {8.0, 12.0}, {12.0, 22.0}, {22.0, 30.0}, {30.0, 45.0}};
    bank.order = 4;
    return bank;
}

} // namespace spdseq
