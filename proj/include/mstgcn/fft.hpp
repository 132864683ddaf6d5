#pragma once

#include <complex>
#include <vector>

namespace mstgcn {

// Radix-2 FFT with Bluestein fallback for arbitrary lengths.
void fft_inplace(std::vector<std::complex<double>>& x, bool inverse);

std::vector<std::complex<double>> fft(const std::vector<double>& x);

// Analytic signal via the FFT-based Hilbert transform.
std::vector<std::complex<double>> analytic_signal(const std::vector<double>& x);

}  // namespace mstgcn
