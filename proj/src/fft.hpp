#pragma once

// Thin wrapper over FFTW for square 2D transforms. Plans are created once
// per size under a lock; execution uses the new-array interface, which is
// thread-safe.

#include <complex>
#include <vector>

namespace snse::detail {

/// Unnormalized real-to-half-complex transform of an n x n row-major array.
/// out has n * (n/2 + 1) entries, out[a * (n/2+1) + b] = sum u e^{-2 pi i (a a' + b b')/n}.
void fft_r2c(int n, std::vector<double>& in, std::vector<std::complex<double>>& out);

/// Inverse of fft_r2c without the 1/n^2 factor. in is destroyed.
void fft_c2r(int n, std::vector<std::complex<double>>& in, std::vector<double>& out);

/// Unnormalized backward (e^{+i}) complex transform, in place.
void fft_c2c_backward(int n, std::vector<std::complex<double>>& data);

}  // namespace snse::detail
