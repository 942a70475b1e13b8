#include <doctest.h>

#include <cmath>
#include <tuple>

#include "ulse/fft.hpp"
#include "ulse/kernels.hpp"
#include "ulse/tensor.hpp"

using namespace ulse;
using kernels::ConvGeom;

namespace {

Tensor random_tensor(int c, int t, int f, Rng& rng) {
    Tensor x(c, t, f);
    for (auto& v : x.v) v = rng.gaussian();
    return x;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian();
    return v;
}

struct Case {
    ConvGeom g;
    Tensor in;
    std::vector<double> w, b;
};

Case make_case(int ci, int co, int groups, int kt, int kf, int stride, int f_in, int T,
               bool transposed, Rng& rng) {
    Case c;
    if (!transposed) {
        c.g = ConvGeom::forward_geom(ci, co, groups, kt, kf, stride, f_in);
    } else {
        // mirror of a conv that downsampled f_target -> f_in
        int f_target = (stride == 1) ? f_in : f_in * stride - rng.uniform_int(stride);
        c.g = ConvGeom::transposed_geom(ci, co, groups, kt, kf, stride, f_in, f_target);
    }
    c.in = random_tensor(ci, T, f_in, rng);
    c.w = random_vec(c.g.weight_count(), rng);
    c.b = random_vec(size_t(co), rng);
    return c;
}

} // namespace

TEST_CASE("fft matches naive dft and inverts") {
    Rng rng(11);
    const int n = 64;
    std::vector<double> x(n);
    for (auto& v : x) v = rng.gaussian();

    auto y = fft::rfft(x);
    REQUIRE(y.size() == size_t(n / 2 + 1));
    for (int k = 0; k <= n / 2; ++k) {
        std::complex<double> ref(0, 0);
        for (int m = 0; m < n; ++m)
            ref += x[m] * std::polar(1.0, -2.0 * M_PI * k * m / n);
        CHECK(std::abs(y[k] - ref) < 1e-9);
    }
    auto back = fft::irfft(y, n);
    for (int m = 0; m < n; ++m) CHECK(back[m] == doctest::Approx(x[m]).epsilon(1e-12));
}

TEST_CASE("rfft and irfft adjoint identities") {
    Rng rng(7);
    const int n = 128;
    std::vector<double> x(n);
    for (auto& v : x) v = rng.gaussian();
    std::vector<fft::cplx> gy(n / 2 + 1);
    for (auto& v : gy) v = {rng.gaussian(), rng.gaussian()};

    // <rfft(x), gy>_R == <x, rfft_adjoint(gy)>
    auto y = fft::rfft(x);
    double lhs = 0;
    for (size_t k = 0; k < y.size(); ++k)
        lhs += y[k].real() * gy[k].real() + y[k].imag() * gy[k].imag();
    auto gx = fft::rfft_adjoint(gy, n);
    double rhs = 0;
    for (int m = 0; m < n; ++m) rhs += x[m] * gx[m];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

    // <irfft(gy), x> == <gy, irfft_adjoint(x)>_R
    auto t = fft::irfft(gy, n);
    double lhs2 = 0;
    for (int m = 0; m < n; ++m) lhs2 += t[m] * x[m];
    auto gys = fft::irfft_adjoint(x);
    double rhs2 = 0;
    for (size_t k = 0; k < gy.size(); ++k)
        rhs2 += gy[k].real() * gys[k].real() + gy[k].imag() * gys[k].imag();
    CHECK(lhs2 == doctest::Approx(rhs2).epsilon(1e-10));
}

TEST_CASE("parallel conv kernels match serial reference") {
    Rng rng(23);
    for (bool transposed : {false, true}) {
        for (auto [ci, co, groups, kt, kf, stride] :
             {std::tuple{4, 8, 1, 3, 3, 2}, std::tuple{6, 6, 2, 2, 5, 1},
              std::tuple{1, 12, 1, 1, 1, 1}, std::tuple{8, 4, 2, 3, 7, 2}}) {
            auto c = make_case(ci, co, groups, kt, kf, stride, 17, 9, transposed, rng);
            Tensor out_omp(c.g.co, c.in.t, c.g.f_out), out_ref = out_omp;
            kernels::conv_forward(c.g, c.w, c.b, c.in, out_omp);
            kernels::reference::conv_forward(c.g, c.w, c.b, c.in, out_ref);
            CHECK(max_abs_diff(out_omp, out_ref) < 1e-12);

            Tensor gout = random_tensor(c.g.co, c.in.t, c.g.f_out, rng);
            Tensor gin_omp(c.g.ci, c.in.t, c.g.f_in), gin_ref = gin_omp;
            kernels::conv_grad_input(c.g, c.w, gout, gin_omp);
            kernels::reference::conv_grad_input(c.g, c.w, gout, gin_ref);
            CHECK(max_abs_diff(gin_omp, gin_ref) < 1e-12);

            std::vector<double> gw_omp(c.w.size(), 0.0), gw_ref(c.w.size(), 0.0);
            std::vector<double> gb_omp(c.b.size(), 0.0), gb_ref(c.b.size(), 0.0);
            kernels::conv_grad_params(c.g, c.in, gout, gw_omp, gb_omp);
            kernels::reference::conv_grad_params(c.g, c.in, gout, gw_ref, gb_ref);
            for (size_t i = 0; i < gw_omp.size(); ++i)
                CHECK(std::fabs(gw_omp[i] - gw_ref[i]) < 1e-12);
            for (size_t i = 0; i < gb_omp.size(); ++i)
                CHECK(std::fabs(gb_omp[i] - gb_ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv gradient kernels satisfy adjoint identities") {
    Rng rng(31);
    for (bool transposed : {false, true}) {
        auto c = make_case(5, 10, 1, 3, 5, 2, 21, 7, transposed, rng);
        std::vector<double> zero_bias; // bias excluded from the bilinear check

        Tensor y(c.g.co, c.in.t, c.g.f_out);
        kernels::conv_forward(c.g, c.w, zero_bias, c.in, y);
        Tensor gy = random_tensor(c.g.co, c.in.t, c.g.f_out, rng);

        // <conv(x), gy> == <x, conv_grad_input(gy)>
        Tensor gx(c.g.ci, c.in.t, c.g.f_in);
        kernels::conv_grad_input(c.g, c.w, gy, gx);
        CHECK(dot(y, gy) == doctest::Approx(dot(c.in, gx)).epsilon(1e-10));

        // <conv(x), gy> == <w, conv_grad_params(x, gy)>
        std::vector<double> gw(c.w.size(), 0.0), gb;
        kernels::conv_grad_params(c.g, c.in, gy, gw, gb);
        double wg = 0;
        for (size_t i = 0; i < gw.size(); ++i) wg += c.w[i] * gw[i];
        CHECK(dot(y, gy) == doctest::Approx(wg).epsilon(1e-10));
    }
}

TEST_CASE("stride-1 transposed conv with symmetric kernel matches causal gather") {
    // k=1 pointwise transposed conv must equal a plain pointwise conv
    Rng rng(5);
    auto g = ConvGeom::transposed_geom(3, 2, 1, 1, 1, 1, 9, 9);
    Tensor in = random_tensor(3, 4, 9, rng);
    auto w = random_vec(g.weight_count(), rng);
    auto b = random_vec(2, rng);
    Tensor out(2, 4, 9);
    kernels::conv_forward(g, w, b, in, out);

    auto gf = ConvGeom::forward_geom(3, 2, 1, 1, 1, 1, 9);
    Tensor out2(2, 4, 9);
    kernels::conv_forward(gf, w, b, in, out2);
    CHECK(max_abs_diff(out, out2) < 1e-14);
}

TEST_CASE("reference mac probe counts full-tap arithmetic") {
    Rng rng(77);
    auto c = make_case(4, 6, 2, 3, 3, 2, 11, 5, false, rng);
    uint64_t count = 0;
    {
        kernels::ReferenceGuard guard(&count);
        Tensor out(c.g.co, c.in.t, c.g.f_out);
        kernels::conv_forward(c.g, c.w, c.b, c.in, out);
    }
    const uint64_t expect =
        uint64_t(c.g.kt) * c.g.kf * c.g.ci_g() * c.g.co * c.g.f_out * c.in.t;
    CHECK(count == expect);
}

TEST_CASE("causality of conv kernels over time") {
    Rng rng(99);
    for (bool transposed : {false, true}) {
        auto c = make_case(3, 3, 1, 3, 3, 1, 13, 12, transposed, rng);
        Tensor out1(c.g.co, c.in.t, c.g.f_out);
        kernels::conv_forward(c.g, c.w, c.b, c.in, out1);
        Tensor in2 = c.in;
        const int cut = 7;
        for (int ch = 0; ch < in2.c; ++ch)
            for (int t = cut; t < in2.t; ++t)
                for (int f = 0; f < in2.f; ++f) in2.at(ch, t, f) += rng.gaussian();
        Tensor out2(c.g.co, c.in.t, c.g.f_out);
        kernels::conv_forward(c.g, c.w, c.b, in2, out2);
        for (int ch = 0; ch < out1.c; ++ch)
            for (int t = 0; t < cut; ++t)
                for (int f = 0; f < out1.f; ++f)
                    CHECK(out1.at(ch, t, f) == out2.at(ch, t, f));
    }
}
