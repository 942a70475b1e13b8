#include "ulse/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace ulse {

std::string Tensor::shape_str() const {
    return "[" + std::to_string(c) + "x" + std::to_string(t) + "x" + std::to_string(f) + "]";
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

static void check_same(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("tensor shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    check_same(a, b);
    Tensor r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] += b.v[i];
    return r;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    check_same(a, b);
    Tensor r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] -= b.v[i];
    return r;
}

Tensor operator*(const Tensor& a, const Tensor& b) {
    check_same(a, b);
    Tensor r = a;
    for (size_t i = 0; i < r.v.size(); ++i) r.v[i] *= b.v[i];
    return r;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
    check_same(x, y);
    for (size_t i = 0; i < x.v.size(); ++i) y.v[i] += alpha * x.v[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same(a, b);
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

double dot(const Tensor& a, const Tensor& b) {
    check_same(a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

uint64_t Rng::next_u64() {
    // splitmix64
    s += 0x9e3779b97f4a7c15ull;
    uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return double(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
    // Box-Muller; discards the second draw for simplicity.
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 1e-300);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int Rng::uniform_int(int n) {
    return int(next_u64() % uint64_t(n));
}

uint64_t Rng::mix(uint64_t seed, uint64_t a, uint64_t b) {
    Rng r(seed ^ (a * 0x9e3779b97f4a7c15ull) ^ (b * 0xd1b54a32d192ed03ull));
    return r.next_u64();
}

} // namespace ulse
