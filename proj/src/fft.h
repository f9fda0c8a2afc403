// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Thin FFTW wrapper for real transforms of arbitrary length.

#ifndef MCSE_SRC_FFT_H_
#define MCSE_SRC_FFT_H_

#include <complex>
#include <span>
#include <vector>

namespace mcse::detail {

// Forward real DFT, unnormalized: out[k] = sum_n in[n] e^{-2 pi j k n / N}.
// out must hold N/2+1 values.
void real_fft(std::span<const double> in, std::span<std::complex<double>> out);

// Inverse of real_fft including the 1/N factor. out has length N.
void inverse_real_fft(std::span<const std::complex<double>> in, std::span<double> out);

// Smallest n >= min_size of the form 2^a 3^b 5^c.
std::size_t fast_fft_size(std::size_t min_size);

}  // namespace mcse::detail

#endif  // MCSE_SRC_FFT_H_
