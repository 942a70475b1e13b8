#include "ulse/nas/controller.hpp"

#include <cmath>
#include <stdexcept>

namespace ulse::nas {

using nn::Param;

ControllerPolicy::ControllerPolicy(const SearchSpace& space, uint64_t seed) : space_(space) {
    Rng rng(seed ? seed : 0xc0117011e7);
    const int n = space.nodes();
    const double kb = 1.0 / std::sqrt(double(kHidden));
    for (int i = 0; i < n; ++i) {
        const int n_prev = i == 0 ? 1 : space.option_count(i - 1);
        const int n_opts = space.option_count(i);
        const std::string base = "cell" + std::to_string(i);
        Param e, wi, wh, b, hw, hb;
        e.resize(base + ".embed", size_t(n_prev) * kEmbed);
        nn::init_uniform(e.w, 0.1, rng);
        wi.resize(base + ".w_ih", size_t(4) * kHidden * kEmbed);
        wh.resize(base + ".w_hh", size_t(4) * kHidden * kHidden);
        b.resize(base + ".b", size_t(4) * kHidden);
        nn::init_uniform(wi.w, kb, rng);
        nn::init_uniform(wh.w, kb, rng);
        nn::init_uniform(b.w, kb, rng);
        hw.resize(base + ".head_w", size_t(n_opts) * kHidden);
        hb.resize(base + ".head_b", size_t(n_opts));
        nn::init_uniform(hw.w, kb, rng);
        // head bias starts at zero: near-uniform initial policy
        embed_.push_back(std::move(e));
        w_ih_.push_back(std::move(wi));
        w_hh_.push_back(std::move(wh));
        b_.push_back(std::move(b));
        heads_w_.push_back(std::move(hw));
        heads_b_.push_back(std::move(hb));
    }
}

ControllerPolicy::Rollout ControllerPolicy::run(const std::vector<int>* forced, Rng* rng) {
    const int n = cells();
    if (forced && int(forced->size()) != n)
        throw std::invalid_argument("controller: wrong action count");
    Rollout out;
    auto& tr = out.trace;
    tr.x.resize(n);
    tr.h_prev.resize(n);
    tr.c_prev.resize(n);
    tr.gi.resize(n);
    tr.gf.resize(n);
    tr.gg.resize(n);
    tr.go.resize(n);
    tr.c.resize(n);
    tr.tanh_c.resize(n);
    tr.probs.resize(n);

    std::vector<double> h(kHidden, 0.0), c(kHidden, 0.0);
    int prev_action = 0;
    for (int i = 0; i < n; ++i) {
        const int n_opts = space_.option_count(i);
        // embedding of the previous action (cell 0 uses a learned start row)
        std::vector<double> x(kEmbed);
        const double* row = embed_[i].w.data() + size_t(prev_action) * kEmbed;
        std::copy(row, row + kEmbed, x.begin());

        std::vector<double> gates(4 * kHidden);
        kernels::matvec(w_ih_[i].w.data(), 4 * kHidden, kEmbed, x.data(), gates.data(), false);
        std::vector<double> hg(4 * kHidden);
        kernels::matvec(w_hh_[i].w.data(), 4 * kHidden, kHidden, h.data(), hg.data(), false);
        for (int k = 0; k < 4 * kHidden; ++k) gates[k] += hg[k] + b_[i].w[k];

        tr.x[i] = x;
        tr.h_prev[i] = h;
        tr.c_prev[i] = c;
        tr.gi[i].resize(kHidden);
        tr.gf[i].resize(kHidden);
        tr.gg[i].resize(kHidden);
        tr.go[i].resize(kHidden);
        tr.c[i].resize(kHidden);
        tr.tanh_c[i].resize(kHidden);
        for (int k = 0; k < kHidden; ++k) {
            const double ig = nn::sigmoid(gates[k]);
            const double fg = nn::sigmoid(gates[kHidden + k]);
            const double gg = std::tanh(gates[2 * kHidden + k]);
            const double og = nn::sigmoid(gates[3 * kHidden + k]);
            c[k] = fg * c[k] + ig * gg;
            const double tc = std::tanh(c[k]);
            h[k] = og * tc;
            tr.gi[i][k] = ig;
            tr.gf[i][k] = fg;
            tr.gg[i][k] = gg;
            tr.go[i][k] = og;
            tr.c[i][k] = c[k];
            tr.tanh_c[i][k] = tc;
        }

        std::vector<double> logits(n_opts);
        kernels::matvec(heads_w_[i].w.data(), n_opts, kHidden, h.data(), logits.data(), false);
        double maxl = -1e300;
        for (int a = 0; a < n_opts; ++a) {
            logits[a] += heads_b_[i].w[a];
            maxl = std::max(maxl, logits[a]);
        }
        std::vector<double> p(n_opts);
        double z = 0.0;
        for (int a = 0; a < n_opts; ++a) z += (p[a] = std::exp(logits[a] - maxl));
        for (int a = 0; a < n_opts; ++a) p[a] /= z;

        int action;
        if (forced) {
            action = (*forced)[i];
            if (action < 0 || action >= n_opts)
                throw std::invalid_argument("controller: action out of range");
        } else {
            double u = rng->uniform();
            action = n_opts - 1;
            double acc = 0.0;
            for (int a = 0; a < n_opts; ++a) {
                acc += p[a];
                if (u < acc) {
                    action = a;
                    break;
                }
            }
        }
        out.logp += std::log(std::max(p[action], 1e-300));
        tr.probs[i] = std::move(p);
        out.actions.push_back(action);
        prev_action = action;
    }
    tr.actions = out.actions;
    return out;
}

ControllerPolicy::Rollout ControllerPolicy::sample(Rng& rng) { return run(nullptr, &rng); }

ControllerPolicy::Rollout ControllerPolicy::evaluate(const std::vector<int>& actions) {
    return run(&actions, nullptr);
}

double ControllerPolicy::sequence_logp(const std::vector<int>& actions) {
    return evaluate(actions).logp;
}

void ControllerPolicy::backward(const Trace& tr, double coeff) {
    const int n = cells();
    std::vector<double> dh(kHidden, 0.0), dc(kHidden, 0.0);
    std::vector<double> dgates(4 * kHidden);
    for (int i = n - 1; i >= 0; --i) {
        const int n_opts = space_.option_count(i);
        // d logp / d logits = onehot - probs
        std::vector<double> dlogits(n_opts);
        for (int a = 0; a < n_opts; ++a)
            dlogits[a] = coeff * ((a == tr.actions[i] ? 1.0 : 0.0) - tr.probs[i][a]);
        // through the head; h at this cell is o * tanh(c)
        for (int a = 0; a < n_opts; ++a) {
            heads_b_[i].g[a] += dlogits[a];
            double* hwg = heads_w_[i].g.data() + size_t(a) * kHidden;
            const double* hw = heads_w_[i].w.data() + size_t(a) * kHidden;
            for (int k = 0; k < kHidden; ++k) {
                hwg[k] += dlogits[a] * tr.go[i][k] * tr.tanh_c[i][k];
                dh[k] += hw[k] * dlogits[a];
            }
        }
        for (int k = 0; k < kHidden; ++k) {
            const double ig = tr.gi[i][k], fg = tr.gf[i][k], gg = tr.gg[i][k], og = tr.go[i][k];
            const double tc = tr.tanh_c[i][k];
            const double dck = dh[k] * og * (1.0 - tc * tc) + dc[k];
            dgates[k] = dck * gg * ig * (1.0 - ig);
            dgates[kHidden + k] = dck * tr.c_prev[i][k] * fg * (1.0 - fg);
            dgates[2 * kHidden + k] = dck * ig * (1.0 - gg * gg);
            dgates[3 * kHidden + k] = dh[k] * tc * og * (1.0 - og);
            dc[k] = dck * fg;
        }
        std::vector<double> dx(kEmbed, 0.0);
        std::fill(dh.begin(), dh.end(), 0.0);
        for (int r = 0; r < 4 * kHidden; ++r) {
            b_[i].g[r] += dgates[r];
            double* wig = w_ih_[i].g.data() + size_t(r) * kEmbed;
            const double* wi = w_ih_[i].w.data() + size_t(r) * kEmbed;
            for (int k = 0; k < kEmbed; ++k) {
                wig[k] += dgates[r] * tr.x[i][k];
                dx[k] += wi[k] * dgates[r];
            }
            double* whg = w_hh_[i].g.data() + size_t(r) * kHidden;
            const double* wh = w_hh_[i].w.data() + size_t(r) * kHidden;
            for (int k = 0; k < kHidden; ++k) {
                whg[k] += dgates[r] * tr.h_prev[i][k];
                dh[k] += wh[k] * dgates[r];
            }
        }
        const int prev_action = i == 0 ? 0 : tr.actions[i - 1];
        double* eg = embed_[i].g.data() + size_t(prev_action) * kEmbed;
        for (int k = 0; k < kEmbed; ++k) eg[k] += dx[k];
    }
}

void ControllerPolicy::params(nn::ParamRefs& out) {
    for (size_t i = 0; i < embed_.size(); ++i) {
        out.push_back({&embed_[i]});
        out.push_back({&w_ih_[i]});
        out.push_back({&w_hh_[i]});
        out.push_back({&b_[i]});
        out.push_back({&heads_w_[i]});
        out.push_back({&heads_b_[i]});
    }
}

void ControllerPolicy::zero_grads() {
    nn::ParamRefs refs;
    params(refs);
    for (auto& r : refs) std::fill(r.p->g.begin(), r.p->g.end(), 0.0);
}

} // namespace ulse::nas
