#include "ulse/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace ulse::fft {

void transform(std::vector<cplx>& a, int sign) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft size must be a power of two");

    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / double(len);
        const cplx wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

std::vector<cplx> rfft(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<cplx> a(n);
    for (size_t i = 0; i < n; ++i) a[i] = cplx(x[i], 0.0);
    transform(a, -1);
    a.resize(n / 2 + 1);
    return a;
}

std::vector<double> irfft(const std::vector<cplx>& y, int n) {
    if (int(y.size()) != n / 2 + 1)
        throw std::invalid_argument("irfft: expected n/2+1 bins");
    std::vector<cplx> a(n);
    for (int k = 0; k <= n / 2; ++k) a[k] = y[k];
    for (int k = 1; k < n / 2; ++k) a[n - k] = std::conj(y[k]);
    transform(a, +1);
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = a[i].real() / double(n);
    return x;
}

std::vector<double> rfft_adjoint(const std::vector<cplx>& gy, int n) {
    if (int(gy.size()) != n / 2 + 1)
        throw std::invalid_argument("rfft_adjoint: expected n/2+1 bins");
    // grad x_m = Re[ sum_k gy_k e^{+2pi i km/n} ], cotangent extended with zeros
    std::vector<cplx> a(n, cplx(0.0, 0.0));
    for (int k = 0; k <= n / 2; ++k) a[k] = gy[k];
    transform(a, +1);
    std::vector<double> gx(n);
    for (int i = 0; i < n; ++i) gx[i] = a[i].real();
    return gx;
}

std::vector<cplx> irfft_adjoint(const std::vector<double>& gx) {
    const int n = int(gx.size());
    std::vector<cplx> a(n);
    for (int i = 0; i < n; ++i) a[i] = cplx(gx[i], 0.0);
    transform(a, -1);
    std::vector<cplx> gy(n / 2 + 1);
    gy[0] = cplx(a[0].real() / double(n), 0.0);
    gy[n / 2] = cplx(a[n / 2].real() / double(n), 0.0);
    for (int k = 1; k < n / 2; ++k) gy[k] = a[k] * (2.0 / double(n));
    return gy;
}

} // namespace ulse::fft
