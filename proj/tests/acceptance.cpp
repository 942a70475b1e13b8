// End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "ulse/complexity.hpp"
#include "ulse/losses.hpp"
#include "ulse/nas/search.hpp"
#include "ulse/network.hpp"
#include "ulse/schedule.hpp"
#include "ulse/trainer.hpp"

using namespace ulse;
namespace fe = ulse::frontend;
using clock_type = std::chrono::steady_clock;

namespace {

struct Criterion {
    std::string name;
    std::function<bool(std::string&)> fn;
};

std::string find_config(const std::string& name) {
    namespace fs = std::filesystem;
    for (const char* base : {".", "..", "../..", "../../.."}) {
        fs::path p = fs::path(base) / "configs" / name;
        if (fs::exists(p)) return p.string();
    }
    return "";
}

nn::ArchitectureSpec discovered_spec() {
    const std::string path = find_config("ul_unas.cfg");
    if (!path.empty()) return nn::ArchitectureSpec::load(path);
    return nn::ArchitectureSpec::from_json(R"({
      "types": ["XConv","XMB","XDWS","XMB","XDWS"],
      "strides": [2,2,1,1,1],
      "groups": [1,2,2,2,2],
      "channels": [12,24,24,32,16],
      "kernels": [[3,3],[2,3],[2,3],[1,5],[1,5]]})");
}

std::vector<double> random_wave(size_t n, Rng& rng, double amp = 0.3) {
    std::vector<double> x(n);
    for (auto& v : x) v = amp * rng.gaussian();
    return x;
}

char detail_buf[512];

// ------------------------------------------------------------- criterion 1

bool c1_table_rows(std::string& detail) {
    struct Row {
        nn::BlockType type;
        double params_k, macs_m;
    };
    const Row rows[] = {
        {nn::BlockType::Conv, 52.12, 57.96}, {nn::BlockType::DWS, 37.23, 23.72},
        {nn::BlockType::Ghost, 43.39, 37.82}, {nn::BlockType::Rep, 37.23, 23.72},
        {nn::BlockType::MB, 39.98, 30.68},   {nn::BlockType::Star, 39.97, 31.46},
    };
    const auto t0 = clock_type::now();
    double worst = 0.0;
    bool ok = true;
    for (const auto& row : rows) {
        auto model = nn::Model::assemble(nn::ArchitectureSpec::prototype(row.type), 7);
        auto rep = complexity::report(model);
        const double pe = std::fabs(rep.params_total / 1e3 / row.params_k - 1.0);
        const double me = std::fabs(rep.macs_per_second / 1e6 / row.macs_m - 1.0);
        worst = std::max({worst, pe, me});
        ok = ok && pe < 0.05 && me < 0.05;
    }
    const double dt = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::snprintf(detail_buf, sizeof detail_buf,
                  "six prototype rows, worst error %.2f%% (tolerance 5%%), %.2f s", 100 * worst,
                  dt);
    detail = detail_buf;
    return ok && dt < 10.0;
}

// ------------------------------------------------------------- criterion 2

bool c2_discovered(std::string& detail) {
    auto model = nn::Model::assemble(discovered_spec(), 7);
    auto rep = complexity::report(model);
    const double pk = rep.params_total / 1e3;
    const double mm = rep.macs_per_second / 1e6;
    std::snprintf(detail_buf, sizeof detail_buf,
                  "%.2fk params (%+.2f%% vs 169k), %.2fM macs (%+.2f%% vs 34M)", pk,
                  100 * (pk / 169.0 - 1.0), mm, 100 * (mm / 34.0 - 1.0));
    detail = detail_buf;
    return std::fabs(pk / 169.0 - 1.0) < 0.05 && std::fabs(mm / 34.0 - 1.0) < 0.05;
}

// ------------------------------------------------------------- criterion 3

bool c3_rep_parity(std::string& detail) {
    auto rep_model = nn::Model::assemble(nn::ArchitectureSpec::prototype(nn::BlockType::Rep), 11);
    auto dws_model = nn::Model::assemble(nn::ArchitectureSpec::prototype(nn::BlockType::DWS), 11);

    // counters agree exactly (Rep reports merged form)
    auto ra = complexity::report(rep_model);
    auto rb = complexity::report(dws_model);
    if (ra.params_total != rb.params_total || ra.macs_per_second != rb.macs_per_second) {
        detail = "merged counters differ from the DWS model";
        return false;
    }

    // move running statistics off init, then compare branched vs merged
    Rng rng(13);
    for (int warm = 0; warm < 3; ++warm) {
        Tensor x = testutil::random_tensor(1, 8, fe::kBins, rng);
        rep_model.forward(x, true);
    }
    std::vector<Tensor> inputs, before;
    for (int trial = 0; trial < 20; ++trial) {
        inputs.push_back(testutil::random_tensor(1, 6, fe::kBins, rng));
        before.push_back(rep_model.forward(inputs.back(), false));
    }
    rep_model.merge_rep_blocks();
    auto merged_rep = complexity::report(rep_model);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial)
        worst = std::max(worst, max_abs_diff(before[trial],
                                             rep_model.forward(inputs[trial], false)));
    std::snprintf(detail_buf, sizeof detail_buf,
                  "counters equal (%lldk scalars), merged-vs-branched max diff %.2e over 20 inputs",
                  (long long)ra.params_total, worst);
    detail = detail_buf;
    return worst < 1e-5 && merged_rep.params_total == rb.params_total &&
           merged_rep.macs_per_second == rb.macs_per_second;
}

// ------------------------------------------------------------- criterion 4

bool c4_causality(std::string& detail) {
    auto model = nn::Model::assemble(discovered_spec(), 17);
    Rng rng(19);
    double worst_prefix = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int T = 8 + rng.uniform_int(8);
        const int cut = 1 + rng.uniform_int(T - 1);
        Tensor a = testutil::random_tensor(1, T, fe::kBins, rng);
        Tensor b = a;
        for (int t = cut; t < T; ++t)
            for (int f = 0; f < fe::kBins; ++f) b.at(0, t, f) += rng.gaussian();
        Tensor ma = model.forward(a, false);
        Tensor mb = model.forward(b, false);
        for (int t = 0; t < cut; ++t)
            for (int f = 0; f < fe::kBins; ++f)
                worst_prefix = std::max(worst_prefix,
                                        std::fabs(ma.at(0, t, f) - mb.at(0, t, f)));
    }

    auto wave = random_wave(32000, rng); // 2 s
    auto batch = model.enhance(wave);
    auto stream = model.stream_enhance(wave);
    double worst_stream = 0.0;
    for (size_t i = 0; i < batch.size(); ++i)
        worst_stream = std::max(worst_stream, std::fabs(batch[i] - stream[i]));

    std::snprintf(detail_buf, sizeof detail_buf,
                  "50 prefix trials max diff %.2e (<=1e-6), stream-vs-batch %.2e (<=1e-5)",
                  worst_prefix, worst_stream);
    detail = detail_buf;
    return worst_prefix <= 1e-6 && worst_stream <= 1e-5;
}

// ------------------------------------------------------------- criterion 5

bool c5_gradients(std::string& detail) {
    const auto t0 = clock_type::now();
    Rng rng(23);
    double worst_aprelu = 0.0, worst_ctfa = 0.0, worst_loss = 0.0;

    {
        nn::APReLU act(3, 5, "a");
        for (auto& v : act.gamma.w) v = rng.uniform(0.5, 1.5);
        for (auto& v : act.beta.w) v = rng.uniform(-0.3, 0.3);
        Tensor x = testutil::random_tensor(3, 4, 5, rng);
        Tensor proj = testutil::random_tensor(3, 4, 5, rng);
        auto loss = [&] { return dot(act.forward(x, true), proj); };
        loss();
        for (auto& g : act.gamma.g) g = 0;
        for (auto& g : act.beta.g) g = 0;
        for (auto& g : act.alpha.g) g = 0;
        act.forward(x, true);
        Tensor gx = act.backward(proj);
        worst_aprelu = std::max(
            {testutil::fd_check(loss, x.v.data(), gx.v.data(), x.size(), 1e-4, 60,
                                [&](size_t i) { return std::fabs(x.v[i]) < 1e-6; }),
             testutil::fd_check(loss, act.gamma.w.data(), act.gamma.g.data(), act.gamma.size()),
             testutil::fd_check(loss, act.beta.w.data(), act.beta.g.data(), act.beta.size()),
             testutil::fd_check(loss, act.alpha.w.data(), act.alpha.g.data(), act.alpha.size())});
    }

    {
        nn::CTFA attn(4, 16, "ct", rng);
        Tensor x = testutil::random_tensor(4, 8, 16, rng);
        Tensor proj = testutil::random_tensor(4, 8, 16, rng);
        auto loss = [&] { return dot(attn.forward(x, true), proj); };
        loss();
        nn::ParamRefs refs;
        attn.params(refs);
        for (auto& r : refs) std::fill(r.p->g.begin(), r.p->g.end(), 0.0);
        attn.forward(x, true);
        Tensor gx = attn.backward(proj);
        worst_ctfa = testutil::fd_check(loss, x.v.data(), gx.v.data(), x.size(), 1e-4, 48);
        for (auto& r : refs)
            worst_ctfa = std::max(worst_ctfa, testutil::fd_check(loss, r.p->w.data(),
                                                                 r.p->g.data(), r.p->w.size(),
                                                                 1e-4, 20));
    }

    {
        auto ref = random_wave(1024, rng);
        auto est = random_wave(1024, rng);
        train::LossWeights w;
        auto hr = train::hybrid_loss_with_grad(est, ref, w);
        auto loss = [&] { return train::hybrid_loss_with_grad(est, ref, w).loss; };
        worst_loss =
            testutil::fd_check(loss, est.data(), hr.grad_est.data(), est.size(), 1e-5, 40);
    }

    const double dt = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::snprintf(detail_buf, sizeof detail_buf,
                  "rel err: aprelu %.2e, ctfa %.2e (<=1e-4), hybrid loss %.2e (<=1e-3); %.1f s",
                  worst_aprelu, worst_ctfa, worst_loss, dt);
    detail = detail_buf;
    return worst_aprelu <= 1e-4 && worst_ctfa <= 1e-4 && worst_loss <= 1e-3 && dt < 120.0;
}

// ------------------------------------------------------------- criterion 6

bool c6_reward(std::string& detail) {
    nas::RewardConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double q = 0.25 + 3.0 * i / 99.0;
        const double m = 30e6 * (0.3 + 1.5 * ((i * 37) % 100) / 99.0);
        const long double omega = (long double)m > 30e6L ? -0.15L : 0.0L;
        const long double expect = ((long double)q - 1.0L) * powl((long double)m / 30e6L, omega);
        worst = std::max(worst, std::fabs(nas::reward(q, m, cfg) - double(expect)));
    }
    // continuity at the target and the zero at Q = Q0
    worst = std::max(worst, std::fabs(nas::reward(2.0, 30e6, cfg) - 1.0));
    worst = std::max(worst, std::fabs(nas::reward(1.0, 47e6, cfg)));
    const double below = nas::reward(1.9, 30e6 - 1e-3, cfg);
    const double above = nas::reward(1.9, 30e6 + 1e-3, cfg);
    std::snprintf(detail_buf, sizeof detail_buf,
                  "100-point grid max abs err %.2e (<=1e-12), boundary jump %.2e", worst,
                  std::fabs(below - above));
    detail = detail_buf;
    return worst <= 1e-12 && std::fabs(below - above) < 1e-8;
}

// ------------------------------------------------------------- criterion 7

bool c7_toy_search(std::string& detail) {
    const auto t0 = clock_type::now();
    nas::SearchSpace space;
    space.blocks = 2;
    space.types = {nn::BlockType::XConv, nn::BlockType::XDWS};
    space.strides = {1, 2};
    space.groups = {1};
    space.channels = {12, 16};
    space.kernels = {{1, 5}, {3, 3}}; // 256 configurations

    nas::RewardConfig rcfg;
    rcfg.target_macs = 18e6;

    int hits = 0;
    double worst_gap = 0.0;
    for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        nas::SearchConfig cfg;
        cfg.space = space;
        cfg.reward = rcfg;
        cfg.eval.kind = nas::EvalConfig::Kind::Toy;
        cfg.episodes = 50;
        cfg.batch = 8;
        cfg.seed = seed;
        auto result = nas::search(cfg);
        auto best = nas::brute_force(space, nas::toy_quality(space, cfg.eval.toy_seed), rcfg);
        const double got = result.ranked.front().reward_value;
        if (got >= 0.99 * best.best_reward) ++hits;
        worst_gap = std::max(worst_gap, 1.0 - got / best.best_reward);
    }
    const double dt = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::snprintf(detail_buf, sizeof detail_buf,
                  "%d/5 seeds within 1%% of the brute-force optimum (worst gap %.3f%%), %.0f s",
                  hits, 100 * worst_gap, dt);
    detail = detail_buf;
    return hits >= 4 && dt < 600.0;
}

// ------------------------------------------------------------- criterion 8

bool c8_training(std::string& detail) {
    const auto t0 = clock_type::now();

    // 200-step overfit on a single pair
    train::TrainConfig overfit;
    overfit.arch = nn::ArchitectureSpec::prototype(nn::BlockType::DWS);
    overfit.seed = 5;
    overfit.steps = 200;
    overfit.batch = 1;
    overfit.data.pairs = 1;
    overfit.data.seconds = 1.0;
    overfit.data.snr_lo = overfit.data.snr_hi = 3.0;
    overfit.val_pairs = 1;
    overfit.val_every = 1000;
    overfit.schedule.warmup_steps = 10;
    overfit.schedule.total_steps = 100000;
    overfit.schedule.lr_peak = 8e-3;
    auto o = train::train(overfit);
    const double step10 = o.loss_history[9];
    const double final_loss = o.loss_history.back();
    const bool overfit_ok = final_loss <= 0.5 * step10;

    // short synthetic training must lift held-out SISNR by >= 3 dB
    train::TrainConfig smoke;
    smoke.arch = nn::ArchitectureSpec::prototype(nn::BlockType::DWS);
    smoke.seed = 1;
    smoke.steps = 900;
    smoke.batch = 2;
    smoke.data.pairs = 24;
    smoke.data.seconds = 1.0;
    smoke.data.snr_lo = 0.0;
    smoke.data.snr_hi = 6.0;
    smoke.val_pairs = 6;
    smoke.val_every = 1000;
    smoke.schedule.warmup_steps = 60;
    smoke.schedule.total_steps = 6000;
    smoke.schedule.lr_peak = 2e-3;
    auto s = train::train(smoke);
    const double gain = s.final.sisnr_enhanced_db - s.final.sisnr_noisy_db;

    const double dt = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::snprintf(detail_buf, sizeof detail_buf,
                  "overfit loss %.4f -> %.4f (need <=50%% of step-10), held-out gain %+.2f dB "
                  "(need >=3), %.0f s",
                  step10, final_loss, gain, dt);
    detail = detail_buf;
    return overfit_ok && gain >= 3.0 && dt < 600.0;
}

// ------------------------------------------------------------- criterion 9

bool c9_frontend(std::string& detail) {
    Rng rng(29);
    double worst_rt = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto x = random_wave(8192, rng);
        auto y = fe::istft(fe::stft(x));
        for (size_t n = fe::kFftSize; n + fe::kFftSize < x.size(); ++n)
            worst_rt = std::max(worst_rt, std::fabs(y[n] - x[n]));
    }

    const auto& fb = fe::ErbFilterbank::instance();
    Tensor x = testutil::random_tensor(1, 4, fe::kBins, rng);
    auto restored = fe::band_split(fe::band_merge(x, fb), fb);
    double worst_low = 0.0;
    for (int t = 0; t < 4; ++t)
        for (int k = 0; k < 65; ++k)
            worst_low = std::max(worst_low, std::fabs(restored.at(0, t, k) - x.at(0, t, k)));

    Tensor ones(1, 2, fe::kBins);
    ones.fill(1.0);
    auto merged = fe::band_merge(ones, fb);
    double worst_ones = 0.0;
    for (double v : merged.v) worst_ones = std::max(worst_ones, std::fabs(v - 1.0));

    std::snprintf(detail_buf, sizeof detail_buf,
                  "round trip %.2e (<=1e-6, 100 trials), low-bin pass-through %.2e, all-ones %.2e",
                  worst_rt, worst_low, worst_ones);
    detail = detail_buf;
    return worst_rt <= 1e-6 && worst_low <= 1e-12 && worst_ones <= 1e-12;
}

// ------------------------------------------------------------ criterion 10

bool c10_scheduler(std::string& detail) {
    train::ScheduleConfig cfg;
    const double l0 = train::lr_at(0, cfg);
    const double l1 = train::lr_at(25000, cfg);
    const double l2 = train::lr_at(137500, cfg);

    train::PlateauScheduler plat(cfg);
    std::vector<double> lrs;
    for (int e = 0; e < 6; ++e) lrs.push_back(plat.observe(1.0));
    const bool plateau_ok = lrs[4] == cfg.lr_peak && lrs[5] == 0.5 * cfg.lr_peak;

    std::snprintf(detail_buf, sizeof detail_buf,
                  "lr(0)=%.2e lr(25000)=%.2e lr(137500)=%.2e, halved at epoch 6: %s", l0, l1, l2,
                  plateau_ok ? "yes" : "no");
    detail = detail_buf;
    return l0 == 1e-6 && l1 == 1e-3 && std::fabs(l2 - 5e-4) < 1e-15 && plateau_ok;
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"complexity oracle vs published prototype table", c1_table_rows},
        {"discovered architecture at 169k params / 34M MACS", c2_discovered},
        {"rep merge parity with dws", c3_rep_parity},
        {"causality and streaming equivalence", c4_causality},
        {"gradient checks (aprelu, ctfa, hybrid loss)", c5_gradients},
        {"reward function against high-precision oracle", c6_reward},
        {"toy-space search convergence to brute-force optimum", c7_toy_search},
        {"training smoke: overfit and held-out sisnr gain", c8_training},
        {"frontend round trip and band merge/split", c9_frontend},
        {"learning-rate schedule checkpoints", c10_scheduler},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        std::string detail;
        const auto t0 = clock_type::now();
        bool ok = false;
        try {
            ok = criteria[i].fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double dt = std::chrono::duration<double>(clock_type::now() - t0).count();
        std::printf("[%s] criterion %zu: %s — %s (%.1f s)\n", ok ? "PASS" : "FAIL", i + 1,
                    criteria[i].name.c_str(), detail.c_str(), dt);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures;
}
