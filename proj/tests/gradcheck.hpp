#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ulse/tensor.hpp"

namespace testutil {

// Central finite differences against an analytic gradient. Checks a strided
// subsample of entries; returns the worst relative error.
inline double fd_check(const std::function<double()>& loss, double* values,
                       const double* analytic, size_t count, double step = 1e-4,
                       size_t max_checks = 64,
                       const std::function<bool(size_t)>& skip = nullptr) {
    double worst = 0.0;
    const size_t stride = std::max<size_t>(1, count / max_checks);
    for (size_t i = 0; i < count; i += stride) {
        if (skip && skip(i)) continue;
        const double keep = values[i];
        values[i] = keep + step;
        const double lp = loss();
        values[i] = keep - step;
        const double lm = loss();
        values[i] = keep;
        const double fd = (lp - lm) / (2.0 * step);
        const double err = std::fabs(analytic[i] - fd) /
                           std::max({std::fabs(analytic[i]), std::fabs(fd), 1e-6});
        worst = std::max(worst, err);
    }
    return worst;
}

inline ulse::Tensor random_tensor(int c, int t, int f, ulse::Rng& rng, double amp = 1.0) {
    ulse::Tensor x(c, t, f);
    for (auto& v : x.v) v = amp * rng.gaussian();
    return x;
}

} // namespace testutil
