#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ulse/complexity.hpp"
#include "ulse/network.hpp"

using namespace ulse;
using nn::ArchitectureSpec;
using nn::BlockType;
using nn::Model;

namespace {

ArchitectureSpec discovered_spec() {
    // shipped search result: types / strides / groups / channels / kernels
    ArchitectureSpec s;
    const BlockType types[5] = {BlockType::XConv, BlockType::XMB, BlockType::XDWS, BlockType::XMB,
                                BlockType::XDWS};
    const int strides[5] = {2, 2, 1, 1, 1};
    const int groups[5] = {1, 2, 2, 2, 2};
    const int channels[5] = {12, 24, 24, 32, 16};
    const int kt[5] = {3, 2, 2, 1, 1};
    const int kf[5] = {3, 3, 3, 5, 5};
    for (int i = 0; i < 5; ++i) {
        nn::BlockSpec b;
        b.type = types[i];
        b.stride = strides[i];
        b.groups = groups[i];
        b.out_channels = channels[i];
        b.kernel_t = kt[i];
        b.kernel_f = kf[i];
        s.encoder_blocks.push_back(b);
    }
    return s;
}

double rel_err(double got, double want) { return (got - want) / want; }

} // namespace

TEST_CASE("pointwise conv parameter and mac unit examples") {
    Rng rng(3);
    auto g = kernels::ConvGeom::forward_geom(16, 16, 1, 1, 1, 1, 33);
    nn::Conv2d conv(g, "pw", rng);
    CHECK(conv.param_count() == 16 * 16 + 16);                  // 272
    CHECK(conv.macs_per_frame() == 16.0 * 16.0 * 33.0);         // per frame
    CHECK(conv.macs_per_frame() * 62.5 == doctest::Approx(528000.0));
}

TEST_CASE("dws block hand count") {
    Rng rng(5);
    nn::BlockSpec s;
    s.type = BlockType::DWS;
    s.out_channels = 16;
    s.stride = 1;
    auto blk = nn::build_block(s, 16, 33, "b", rng);
    std::vector<nn::LayerReport> rep;
    blk->report(rep);
    int64_t total = 0;
    for (const auto& e : rep) total += e.params;
    // pointwise(16*16+16) + BN(32) + depthwise(16*9+16) + BN(32) + 2 PReLU(16)
    CHECK(total == 272 + 32 + 160 + 32 + 16 + 16);
}

TEST_CASE("prototype rows match the published table within 5 percent") {
    struct Row {
        BlockType type;
        double params_k, macs_m;
    };
    const Row rows[] = {
        {BlockType::Conv, 52.12, 57.96}, {BlockType::DWS, 37.23, 23.72},
        {BlockType::Ghost, 43.39, 37.82}, {BlockType::Rep, 37.23, 23.72},
        {BlockType::MB, 39.98, 30.68},   {BlockType::Star, 39.97, 31.46},
    };
    for (const auto& row : rows) {
        auto m = Model::assemble(ArchitectureSpec::prototype(row.type), 7);
        auto rep = complexity::report(m);
        const double pk = rep.params_total / 1e3;
        const double mm = rep.macs_per_second / 1e6;
        INFO(nn::block_type_name(row.type), ": params ", pk, "k (ref ", row.params_k,
             "k, err ", 100 * rel_err(pk, row.params_k), "%), macs ", mm, "M (ref ", row.macs_m,
             "M, err ", 100 * rel_err(mm, row.macs_m), "%)");
        CHECK(std::fabs(rel_err(pk, row.params_k)) < 0.05);
        CHECK(std::fabs(rel_err(mm, row.macs_m)) < 0.05);
    }
}

TEST_CASE("discovered architecture lands at 169k params and 34M macs") {
    auto m = Model::assemble(discovered_spec(), 7);
    auto rep = complexity::report(m);
    const double pk = rep.params_total / 1e3;
    const double mm = rep.macs_per_second / 1e6;
    INFO("params ", pk, "k, macs ", mm, "M");
    CHECK(std::fabs(rel_err(pk, 169.0)) < 0.05);
    CHECK(std::fabs(rel_err(mm, 34.0)) < 0.05);
}

TEST_CASE("report totals equal per-layer sums") {
    auto m = Model::assemble(ArchitectureSpec::prototype(BlockType::DWS), 7);
    auto rep = complexity::report(m);
    int64_t p = 0;
    double macs = 0;
    for (const auto& e : rep.per_layer) {
        p += e.params;
        macs += e.macs_per_frame;
    }
    CHECK(p == rep.params_total);
    CHECK(macs == doctest::Approx(rep.macs_per_frame));
    CHECK(rep.macs_per_second == doctest::Approx(macs * 62.5));
}

TEST_CASE("complexity is monotone in channel count") {
    for (int grow = 0; grow < 5; ++grow) {
        auto base = ArchitectureSpec::prototype(BlockType::XMB, 16);
        auto bigger = base;
        bigger.encoder_blocks[grow].out_channels = 20;
        auto m0 = Model::assemble(base, 7);
        auto m1 = Model::assemble(bigger, 7);
        CHECK(complexity::count_params(m1) > complexity::count_params(m0));
        CHECK(complexity::count_macs(m1) > complexity::count_macs(m0));
    }
}

TEST_CASE("analytic macs equal instrumented multiply counts per layer") {
    // tiny model, reference kernels instrumented at every multiply site
    ArchitectureSpec spec;
    for (int i = 0; i < 2; ++i) {
        nn::BlockSpec b;
        b.type = i ? BlockType::MB : BlockType::Conv;
        b.stride = 2;
        b.groups = 1;
        b.out_channels = 4;
        b.kernel_t = 2;
        b.kernel_f = 3;
        spec.encoder_blocks.push_back(b);
    }
    auto m = Model::assemble(spec, 11, false);
    const int T = 3;
    Tensor x(1, T, 257);
    Rng rng(9);
    for (auto& v : x.v) v = rng.gaussian();

    uint64_t count = 0;
    {
        kernels::ReferenceGuard guard(&count);
        m.forward(x, false);
    }
    auto rep = complexity::report(m);
    // analytic counts are per frame; the instrumented pass ran T frames
    CHECK(double(count) == doctest::Approx(rep.macs_per_frame * T));
}
