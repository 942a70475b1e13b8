#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulse {

// Dense 3-D array with axes (channel, time, frequency). All feature maps,
// spectrogram planes and parameter grids in this library use this layout;
// 1-D/2-D data uses degenerate leading axes.
struct Tensor {
    int c = 0, t = 0, f = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int t_, int f_) : c(c_), t(t_), f(f_), v(size_t(c_) * t_ * f_, 0.0) {}

    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && t == o.t && f == o.f; }

    double& at(int ci, int ti, int fi) { return v[(size_t(ci) * t + ti) * f + fi]; }
    double at(int ci, int ti, int fi) const { return v[(size_t(ci) * t + ti) * f + fi]; }

    double* row(int ci, int ti) { return v.data() + (size_t(ci) * t + ti) * f; }
    const double* row(int ci, int ti) const { return v.data() + (size_t(ci) * t + ti) * f; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    std::string shape_str() const;
    bool all_finite() const;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // elementwise
void axpy(double alpha, const Tensor& x, Tensor& y); // y += alpha*x
double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

// Deterministic RNG used everywhere randomness is needed.
struct Rng {
    uint64_t s;
    explicit Rng(uint64_t seed = 0x9e3779b97f4a7c15ull) : s(seed ? seed : 1) {}

    uint64_t next_u64();
    double uniform();                      // [0,1)
    double uniform(double lo, double hi);
    double gaussian();
    int uniform_int(int n);                // [0,n)

    // Independent stream for (seed, a, b); used for per-candidate seeding.
    static uint64_t mix(uint64_t seed, uint64_t a, uint64_t b = 0);
};

} // namespace ulse
