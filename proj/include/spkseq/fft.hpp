#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace spkseq::fft {

using cplx = std::complex<double>;

std::size_t next_pow2(std::size_t n);

/// Transform size for a linear (non-circular) convolution of two length-L
/// sequences: the smallest power of two >= 2L - 1.
std::size_t linear_conv_size(std::size_t length);

/// Real-to-complex DFT of `in` zero-padded to `n`; writes n/2 + 1 bins.
void rfft(std::span<const double> in, std::size_t n, std::span<cplx> out);

/// Inverse of rfft (normalised by 1/n); writes the first out.size() <= n samples.
void irfft(std::span<const cplx> in, std::size_t n, std::span<double> out);

}  // namespace spkseq::fft
