#pragma once

#include <complex>
#include <vector>

namespace ulse::fft {

using cplx = std::complex<double>;

// In-place radix-2 complex transform, unnormalized. sign = -1 gives the
// forward kernel e^{-2pi i kn/N}, sign = +1 the inverse kernel. N must be a
// power of two.
void transform(std::vector<cplx>& a, int sign);

// One-sided real FFT pair for even N. rfft is unnormalized; irfft includes
// the 1/N factor so irfft(rfft(x)) == x.
std::vector<cplx> rfft(const std::vector<double>& x);
std::vector<double> irfft(const std::vector<cplx>& y, int n);

// Adjoints of the two maps above viewed as real-linear operators, used to
// backpropagate through analysis/synthesis transforms.
std::vector<double> rfft_adjoint(const std::vector<cplx>& gy, int n);
std::vector<cplx> irfft_adjoint(const std::vector<double>& gx);

} // namespace ulse::fft
