#pragma once

#include <complex>
#include <vector>

namespace spdseq::detail {

/// In-place DFT of a complex sequence (forward transform, no scaling).
/// Radix-2 Cooley-Tukey for power-of-two lengths, Bluestein otherwise,
/// so periodograms work for any sampling rate.
void fft(std::vector<std::complex<double>>& a);

/// DFT of a real sequence; returns all N complex bins.
std::vector<std::complex<double>> fft_real(const std::vector<double>& x);

} // namespace spdseq::detail
