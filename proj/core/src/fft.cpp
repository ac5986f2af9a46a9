#include "spdseq/fft.hpp"

#include <cmath>
#include <numbers>

namespace spdseq::detail {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

// Bluestein's chirp-z trick: express a length-n DFT as a convolution,
// evaluated with a padded radix-2 FFT.
void fft_bluestein(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    std::vector<std::complex<double>> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // Angle uses k^2 mod 2n to stay accurate for large k.
        const std::size_t k2 = (k * k) % (2 * n);
        const double ang = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(ang), -std::sin(ang)};
    }

    std::vector<std::complex<double>> u(m, {0.0, 0.0});
    std::vector<std::complex<double>> v(m, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
    v[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) v[k] = v[m - k] = std::conj(chirp[k]);

    fft_radix2(u, false);
    fft_radix2(v, false);
    for (std::size_t k = 0; k < m; ++k) u[k] *= v[k];
    fft_radix2(u, true);

    for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * chirp[k];
}

} // namespace

void fft(std::vector<std::complex<double>>& a) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size())) {
        fft_radix2(a, false);
    } else {
        fft_bluestein(a);
    }
}

std::vector<std::complex<double>> fft_real(const std::vector<double>& x) {
    std::vector<std::complex<double>> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
    fft(a);
    return a;
}

} // namespace spdseq::detail
