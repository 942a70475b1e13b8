#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ulse/layers.hpp"

using namespace ulse;
using namespace ulse::nn;
using testutil::fd_check;
using testutil::random_tensor;

TEST_CASE("aprelu evaluates the affine-plus-prelu form") {
    Rng rng(1);
    APReLU act(1, 1, "a");
    Tensor x(1, 1, 1);

    x.at(0, 0, 0) = 1.0; // 1*1 + 0 + max(0,1) = 2
    CHECK(act.forward(x, false).at(0, 0, 0) == doctest::Approx(2.0));

    x.at(0, 0, 0) = -1.0; // -1 + 0.25*(-1) = -1.25
    CHECK(act.forward(x, false).at(0, 0, 0) == doctest::Approx(-1.25));

    act.gamma.w[0] = 0.3;
    act.beta.w[0] = 0.5;
    act.alpha.w[0] = 0.1;
    x.at(0, 0, 0) = -2.0; // 0.3*(-2) + 0.5 + 0.1*(-2) = -0.3
    CHECK(act.forward(x, false).at(0, 0, 0) == doctest::Approx(-0.3));
}

TEST_CASE("aprelu with zero affine equals prelu exactly") {
    Rng rng(2);
    APReLU ap(3, 5, "a");
    PReLU p(3, "p");
    std::fill(ap.gamma.w.begin(), ap.gamma.w.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
        ap.alpha.w[c] = 0.1 * (c + 1);
        p.alpha.w[c] = 0.1 * (c + 1);
    }
    Tensor x = random_tensor(3, 4, 5, rng);
    CHECK(max_abs_diff(ap.forward(x, false), p.forward(x, false)) == 0.0);
}

TEST_CASE("aprelu gradients match finite differences") {
    Rng rng(3);
    const int C = 3, T = 4, F = 5;
    APReLU act(C, F, "a");
    for (auto& v : act.gamma.w) v = rng.uniform(0.5, 1.5);
    for (auto& v : act.beta.w) v = rng.uniform(-0.3, 0.3);
    Tensor x = random_tensor(C, T, F, rng);
    Tensor proj = random_tensor(C, T, F, rng);

    auto loss = [&] { return dot(act.forward(x, true), proj); };
    loss();
    for (auto& g : act.gamma.g) g = 0;
    for (auto& g : act.beta.g) g = 0;
    for (auto& g : act.alpha.g) g = 0;
    act.forward(x, true);
    Tensor gx = act.backward(proj);

    CHECK(fd_check(loss, x.v.data(), gx.v.data(), x.size(), 1e-4, 60,
                   [&](size_t i) { return std::fabs(x.v[i]) < 1e-6; }) < 1e-4);
    CHECK(fd_check(loss, act.gamma.w.data(), act.gamma.g.data(), act.gamma.size()) < 1e-4);
    CHECK(fd_check(loss, act.beta.w.data(), act.beta.g.data(), act.beta.size()) < 1e-4);
    CHECK(fd_check(loss, act.alpha.w.data(), act.alpha.g.data(), act.alpha.size()) < 1e-4);
}

TEST_CASE("conv2d layer gradients match finite differences") {
    Rng rng(5);
    for (bool transposed : {false, true}) {
        kernels::ConvGeom g =
            transposed ? kernels::ConvGeom::transposed_geom(3, 4, 1, 2, 3, 2, 6, 11)
                       : kernels::ConvGeom::forward_geom(3, 4, 1, 2, 3, 2, 11);
        Conv2d conv(g, "c", rng);
        Tensor x = random_tensor(3, 4, g.f_in, rng);
        Tensor proj = random_tensor(4, 4, g.f_out, rng);

        auto loss = [&] { return dot(conv.forward(x, true), proj); };
        conv.forward(x, true);
        std::fill(conv.weight.g.begin(), conv.weight.g.end(), 0.0);
        std::fill(conv.bias.g.begin(), conv.bias.g.end(), 0.0);
        Tensor gx = conv.backward(proj);

        CHECK(fd_check(loss, x.v.data(), gx.v.data(), x.size()) < 1e-6);
        CHECK(fd_check(loss, conv.weight.w.data(), conv.weight.g.data(), conv.weight.size()) <
              1e-6);
        CHECK(fd_check(loss, conv.bias.w.data(), conv.bias.g.data(), conv.bias.size()) < 1e-6);
    }
}

TEST_CASE("batchnorm gradients and eval identity at init") {
    Rng rng(7);
    BatchNorm2d bn(3, "bn");
    Tensor x = random_tensor(3, 5, 4, rng);

    // eval mode at init is the identity
    CHECK(max_abs_diff(bn.eval_only(x), x) < 1e-2); // eps-scaled only
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(bn.eval_only(x).v[i] == doctest::Approx(x.v[i]).epsilon(1e-5));

    Tensor proj = random_tensor(3, 5, 4, rng);
    auto loss = [&] { return dot(bn.forward(x, true), proj); };
    bn.forward(x, true);
    std::fill(bn.gamma.g.begin(), bn.gamma.g.end(), 0.0);
    std::fill(bn.beta.g.begin(), bn.beta.g.end(), 0.0);
    Tensor gx = bn.backward(proj);

    CHECK(fd_check(loss, x.v.data(), gx.v.data(), x.size()) < 1e-5);
    CHECK(fd_check(loss, bn.gamma.w.data(), bn.gamma.g.data(), bn.gamma.size()) < 1e-6);
    CHECK(fd_check(loss, bn.beta.w.data(), bn.beta.g.data(), bn.beta.size()) < 1e-6);
}

TEST_CASE("layernorm gradients match finite differences") {
    Rng rng(9);
    LayerNormCF ln(3, 4, "ln");
    for (auto& v : ln.gamma.w) v = rng.uniform(0.5, 1.5);
    Tensor x = random_tensor(3, 5, 4, rng);
    Tensor proj = random_tensor(3, 5, 4, rng);
    auto loss = [&] { return dot(ln.forward(x, true), proj); };
    ln.forward(x, true);
    std::fill(ln.gamma.g.begin(), ln.gamma.g.end(), 0.0);
    std::fill(ln.beta.g.begin(), ln.beta.g.end(), 0.0);
    Tensor gx = ln.backward(proj);
    CHECK(fd_check(loss, x.v.data(), gx.v.data(), x.size()) < 1e-5);
    CHECK(fd_check(loss, ln.gamma.w.data(), ln.gamma.g.data(), ln.gamma.size()) < 1e-6);
    CHECK(fd_check(loss, ln.beta.w.data(), ln.beta.g.data(), ln.beta.size()) < 1e-6);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(11);
    Linear lin(6, 4, "l", rng);
    const int rows = 7;
    std::vector<double> x(6 * rows), proj(4 * rows);
    for (auto& v : x) v = rng.gaussian();
    for (auto& v : proj) v = rng.gaussian();

    auto loss = [&] {
        auto y = lin.forward(x, rows, true);
        double s = 0;
        for (size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
        return s;
    };
    loss();
    std::fill(lin.weight.g.begin(), lin.weight.g.end(), 0.0);
    std::fill(lin.bias.g.begin(), lin.bias.g.end(), 0.0);
    auto gx = lin.backward(proj, rows);
    CHECK(fd_check(loss, x.data(), gx.data(), x.size()) < 1e-6);
    CHECK(fd_check(loss, lin.weight.w.data(), lin.weight.g.data(), lin.weight.size()) < 1e-6);
    CHECK(fd_check(loss, lin.bias.w.data(), lin.bias.g.data(), lin.bias.size()) < 1e-6);
}

TEST_CASE("gru gradients match finite differences in both directions") {
    Rng rng(13);
    for (bool dual : {true, false}) {
        for (bool reverse : {false, true}) {
            GRU gru(3, 4, "g", rng, dual);
            const int seqs = 2, steps = 5;
            std::vector<double> x(size_t(seqs) * steps * 3), proj(size_t(seqs) * steps * 4);
            for (auto& v : x) v = rng.gaussian();
            for (auto& v : proj) v = rng.gaussian();

            auto loss = [&] {
                auto y = gru.forward(x, seqs, steps, true, reverse);
                double s = 0;
                for (size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
                return s;
            };
            loss();
            ParamRefs refs;
            gru.params(refs);
            for (auto& r : refs) std::fill(r.p->g.begin(), r.p->g.end(), 0.0);
            gru.forward(x, seqs, steps, true, reverse);
            auto gx = gru.backward(proj);
            CHECK(fd_check(loss, x.data(), gx.data(), x.size()) < 1e-5);
            for (auto& r : refs)
                CHECK(fd_check(loss, r.p->w.data(), r.p->g.data(), r.p->w.size()) < 1e-5);
        }
    }
}

TEST_CASE("gru streaming step equals batch forward") {
    Rng rng(17);
    GRU gru(3, 5, "g", rng, true);
    const int steps = 9;
    std::vector<double> x(size_t(steps) * 3);
    for (auto& v : x) v = rng.gaussian();
    auto y = gru.infer(x, 1, steps, false);

    std::vector<double> h(5, 0.0);
    for (int t = 0; t < steps; ++t) {
        gru.step(x.data() + size_t(t) * 3, h);
        for (int i = 0; i < 5; ++i) CHECK(h[i] == doctest::Approx(y[size_t(t) * 5 + i]));
    }
}

TEST_CASE("channel shuffle permutation") {
    Rng rng(19);
    Tensor x(4, 1, 2);
    for (int c = 0; c < 4; ++c)
        for (int f = 0; f < 2; ++f) x.at(c, 0, f) = c;

    CHECK(max_abs_diff(channel_shuffle(x, 1), x) == 0.0);

    auto y = channel_shuffle(x, 2); // [a,b,c,d] -> [a,c,b,d]
    CHECK(y.at(0, 0, 0) == 0);
    CHECK(y.at(1, 0, 0) == 2);
    CHECK(y.at(2, 0, 0) == 1);
    CHECK(y.at(3, 0, 0) == 3);

    // applying the shuffle twice with C=4, G=2 restores the order
    CHECK(max_abs_diff(channel_shuffle(y, 2), x) == 0.0);
    CHECK(max_abs_diff(channel_unshuffle(y, 2), x) == 0.0);

    Tensor bad(3, 1, 2);
    CHECK_THROWS_AS(channel_shuffle(bad, 2), std::invalid_argument);
}

TEST_CASE("conv streaming step equals batch forward") {
    Rng rng(23);
    for (bool transposed : {false, true}) {
        kernels::ConvGeom g =
            transposed ? kernels::ConvGeom::transposed_geom(3, 4, 1, 3, 3, 2, 6, 11)
                       : kernels::ConvGeom::forward_geom(3, 4, 1, 3, 3, 2, 11);
        Conv2d conv(g, "c", rng);
        const int T = 7;
        Tensor x = random_tensor(3, T, g.f_in, rng);
        Tensor batch = conv.forward(x, false);

        auto st = conv.make_state();
        for (int t = 0; t < T; ++t) {
            Tensor frame(3, 1, g.f_in);
            for (int c = 0; c < 3; ++c)
                std::copy(x.row(c, t), x.row(c, t) + g.f_in, frame.row(c, 0));
            Tensor out = conv.step(frame, *st);
            for (int c = 0; c < 4; ++c)
                for (int f = 0; f < g.f_out; ++f)
                    CHECK(out.at(c, 0, f) == doctest::Approx(batch.at(c, t, f)).epsilon(1e-12));
        }
    }
}
