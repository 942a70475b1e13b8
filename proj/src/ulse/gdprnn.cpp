#include "ulse/gdprnn.hpp"

#include <stdexcept>

namespace ulse::nn {

GDPRNNConfig GDPRNNConfig::defaults(int channels) {
    GDPRNNConfig cfg;
    if (channels % cfg.groups) cfg.groups = 1;
    cfg.intra_hidden = std::max(1, 13 * channels / 16);
    cfg.inter_hidden = std::max(1, channels / 2);
    return cfg;
}

GDPRNN::GDPRNN(int channels, int freq, const GDPRNNConfig& cfg, const std::string& name, Rng& rng)
    : channels_(channels), freq_(freq), cfg_(cfg) {
    if (cfg_.groups < 1 || channels % cfg_.groups)
        throw std::invalid_argument("gdprnn channels not divisible by groups");
    if (cfg_.intra_hidden <= 0) cfg_.intra_hidden = std::max(1, 13 * channels / 16);
    if (cfg_.inter_hidden <= 0) cfg_.inter_hidden = std::max(1, channels / 2);
    group_ch_ = channels / cfg_.groups;

    for (int g = 0; g < cfg_.groups; ++g) {
        intra_fw_.emplace_back(group_ch_, cfg_.intra_hidden,
                               name + ".intra.fw" + std::to_string(g), rng, false);
        intra_bw_.emplace_back(group_ch_, cfg_.intra_hidden,
                               name + ".intra.bw" + std::to_string(g), rng, false);
    }
    intra_fc_ = Linear(cfg_.groups * 2 * cfg_.intra_hidden, channels, name + ".intra.fc", rng);
    intra_ln_ = LayerNormCF(channels, freq, name + ".intra.ln");
    for (int f = 0; f < freq; ++f)
        for (int g = 0; g < cfg_.groups; ++g)
            inter_.emplace_back(group_ch_, cfg_.inter_hidden,
                                name + ".inter.f" + std::to_string(f) + "g" + std::to_string(g),
                                rng, false);
    inter_fc_ = Linear(cfg_.groups * cfg_.inter_hidden, channels, name + ".inter.fc", rng);
    inter_ln_ = LayerNormCF(channels, freq, name + ".inter.ln");
}

// Packs group g of x as [seq x step x group_ch]. by_frame=true gives one
// sequence per frame stepping over frequency (intra); false gives one
// sequence per frequency stepping over time (inter) -- callers slice per f.
std::vector<double> GDPRNN::pack_group(const Tensor& x, int g, bool by_frame) const {
    const int k = group_ch_;
    std::vector<double> out;
    if (by_frame) {
        out.resize(size_t(x.t) * x.f * k);
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f)
                for (int c = 0; c < k; ++c)
                    out[(size_t(t) * x.f + f) * k + c] = x.at(g * k + c, t, f);
    } else {
        out.resize(size_t(x.f) * x.t * k);
        for (int f = 0; f < x.f; ++f)
            for (int t = 0; t < x.t; ++t)
                for (int c = 0; c < k; ++c)
                    out[(size_t(f) * x.t + t) * k + c] = x.at(g * k + c, t, f);
    }
    return out;
}

Tensor GDPRNN::forward(const Tensor& x, bool train) {
    if (x.c != channels_ || x.f != freq_)
        throw std::invalid_argument("gdprnn input shape mismatch: " + x.shape_str());
    const int T = x.t, F = freq_, G = cfg_.groups, K = group_ch_;
    const int ha = cfg_.intra_hidden, hb = cfg_.inter_hidden;
    if (train) c_x_ = x;

    // intra: bidirectional over frequency, one sequence per frame
    std::vector<std::vector<double>> outs_fw(G), outs_bw(G);
    for (int g = 0; g < G; ++g) {
        auto packed = pack_group(x, g, true);
        outs_fw[g] = intra_fw_[g].forward(packed, T, F, train, false);
        outs_bw[g] = intra_bw_[g].forward(packed, T, F, train, true);
    }
    const int cat = G * 2 * ha;
    std::vector<double> cat_in(size_t(T) * F * cat);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) {
            double* row = cat_in.data() + (size_t(t) * F + f) * cat;
            for (int g = 0; g < G; ++g) {
                const double* fw = outs_fw[g].data() + (size_t(t) * F + f) * ha;
                const double* bw = outs_bw[g].data() + (size_t(t) * F + f) * ha;
                std::copy(fw, fw + ha, row + g * 2 * ha);
                std::copy(bw, bw + ha, row + g * 2 * ha + ha);
            }
        }
    auto proj = intra_fc_.forward(cat_in, T * F, train);
    Tensor y(channels_, T, F);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < channels_; ++c)
                y.at(c, t, f) = proj[(size_t(t) * F + f) * channels_ + c];
    Tensor z = x + intra_ln_.forward(y, train);
    z = channel_shuffle(z, G);
    if (train) c_z_ = z;

    // inter: causal over time, per-frequency weight banks
    std::vector<double> cat2(size_t(T) * F * G * hb);
    for (int f = 0; f < F; ++f) {
        for (int g = 0; g < G; ++g) {
            std::vector<double> seq(size_t(T) * K);
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < K; ++c) seq[size_t(t) * K + c] = z.at(g * K + c, t, f);
            auto h = inter_[size_t(f) * G + g].forward(seq, 1, T, train);
            for (int t = 0; t < T; ++t)
                std::copy(h.begin() + size_t(t) * hb, h.begin() + size_t(t + 1) * hb,
                          cat2.begin() + (size_t(t) * F + f) * G * hb + size_t(g) * hb);
        }
    }
    auto proj2 = inter_fc_.forward(cat2, T * F, train);
    Tensor w(channels_, T, F);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < channels_; ++c)
                w.at(c, t, f) = proj2[(size_t(t) * F + f) * channels_ + c];
    return z + inter_ln_.forward(w, train);
}

Tensor GDPRNN::backward(const Tensor& gy) {
    const int T = gy.t, F = freq_, G = cfg_.groups, K = group_ch_;
    const int ha = cfg_.intra_hidden, hb = cfg_.inter_hidden;

    // inter path
    Tensor gw = inter_ln_.backward(gy);
    std::vector<double> gproj2(size_t(T) * F * channels_);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < channels_; ++c)
                gproj2[(size_t(t) * F + f) * channels_ + c] = gw.at(c, t, f);
    auto gcat2 = inter_fc_.backward(gproj2, T * F);
    Tensor gz = gy; // residual branch
    for (int f = 0; f < F; ++f) {
        for (int g = 0; g < G; ++g) {
            std::vector<double> gh(size_t(T) * hb);
            for (int t = 0; t < T; ++t)
                std::copy(gcat2.begin() + (size_t(t) * F + f) * G * hb + size_t(g) * hb,
                          gcat2.begin() + (size_t(t) * F + f) * G * hb + size_t(g + 1) * hb,
                          gh.begin() + size_t(t) * hb);
            auto gseq = inter_[size_t(f) * G + g].backward(gh);
            for (int t = 0; t < T; ++t)
                for (int c = 0; c < K; ++c) gz.at(g * K + c, t, f) += gseq[size_t(t) * K + c];
        }
    }
    gz = channel_unshuffle(gz, G);

    // intra path
    Tensor gx = gz; // residual branch
    Tensor gyy = intra_ln_.backward(gz);
    std::vector<double> gproj(size_t(T) * F * channels_);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < channels_; ++c)
                gproj[(size_t(t) * F + f) * channels_ + c] = gyy.at(c, t, f);
    auto gcat = intra_fc_.backward(gproj, T * F);
    for (int g = 0; g < G; ++g) {
        std::vector<double> gfw(size_t(T) * F * ha), gbw(size_t(T) * F * ha);
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f) {
                const double* row = gcat.data() + (size_t(t) * F + f) * G * 2 * ha;
                std::copy(row + g * 2 * ha, row + g * 2 * ha + ha,
                          gfw.begin() + (size_t(t) * F + f) * ha);
                std::copy(row + g * 2 * ha + ha, row + g * 2 * ha + 2 * ha,
                          gbw.begin() + (size_t(t) * F + f) * ha);
            }
        auto gp1 = intra_fw_[g].backward(gfw);
        auto gp2 = intra_bw_[g].backward(gbw);
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f)
                for (int c = 0; c < K; ++c)
                    gx.at(g * K + c, t, f) +=
                        gp1[(size_t(t) * F + f) * K + c] + gp2[(size_t(t) * F + f) * K + c];
    }
    return gx;
}

namespace {
struct GdprnnState final : StreamState {
    std::vector<std::vector<double>> inter_h; // freq*groups hidden vectors
};
} // namespace

StatePtr GDPRNN::make_state() const {
    auto st = std::make_unique<GdprnnState>();
    st->inter_h.assign(inter_.size(), std::vector<double>(cfg_.inter_hidden, 0.0));
    return st;
}

Tensor GDPRNN::step(const Tensor& x, StreamState& state) const {
    auto& st = dynamic_cast<GdprnnState&>(state);
    const int F = freq_, G = cfg_.groups, K = group_ch_;
    const int ha = cfg_.intra_hidden, hb = cfg_.inter_hidden;

    // intra (the bidirectional span lives inside the current frame)
    std::vector<double> cat_in(size_t(F) * G * 2 * ha);
    for (int g = 0; g < G; ++g) {
        std::vector<double> seq(size_t(F) * K);
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < K; ++c) seq[size_t(f) * K + c] = x.at(g * K + c, 0, f);
        auto fw = intra_fw_[g].infer(seq, 1, F, false);
        auto bw = intra_bw_[g].infer(seq, 1, F, true);
        for (int f = 0; f < F; ++f) {
            double* row = cat_in.data() + size_t(f) * G * 2 * ha + size_t(g) * 2 * ha;
            std::copy(fw.begin() + size_t(f) * ha, fw.begin() + size_t(f + 1) * ha, row);
            std::copy(bw.begin() + size_t(f) * ha, bw.begin() + size_t(f + 1) * ha, row + ha);
        }
    }
    auto proj = intra_fc_.infer(cat_in, F);
    Tensor y(channels_, 1, F);
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < channels_; ++c) y.at(c, 0, f) = proj[size_t(f) * channels_ + c];
    Tensor z = x + intra_ln_.infer(y);
    z = channel_shuffle(z, G);

    std::vector<double> cat2(size_t(F) * G * hb);
    std::vector<double> xin(K);
    for (int f = 0; f < F; ++f)
        for (int g = 0; g < G; ++g) {
            for (int c = 0; c < K; ++c) xin[c] = z.at(g * K + c, 0, f);
            auto& h = st.inter_h[size_t(f) * G + g];
            inter_[size_t(f) * G + g].step(xin.data(), h);
            std::copy(h.begin(), h.end(), cat2.begin() + size_t(f) * G * hb + size_t(g) * hb);
        }
    auto proj2 = inter_fc_.infer(cat2, F);
    Tensor w(channels_, 1, F);
    for (int f = 0; f < F; ++f)
        for (int c = 0; c < channels_; ++c) w.at(c, 0, f) = proj2[size_t(f) * channels_ + c];
    return z + inter_ln_.infer(w);
}

void GDPRNN::params(ParamRefs& out) {
    for (auto& g : intra_fw_) g.params(out);
    for (auto& g : intra_bw_) g.params(out);
    intra_fc_.params(out);
    intra_ln_.params(out);
    for (auto& g : inter_) g.params(out);
    inter_fc_.params(out);
    inter_ln_.params(out);
}

void GDPRNN::report(std::vector<LayerReport>& out, const std::string& prefix) const {
    int64_t intra_params = 0;
    double intra_macs = 0.0;
    for (const auto& g : intra_fw_) {
        intra_params += g.param_count();
        intra_macs += g.macs_per_step() * freq_;
    }
    for (const auto& g : intra_bw_) {
        intra_params += g.param_count();
        intra_macs += g.macs_per_step() * freq_;
    }
    out.push_back({prefix + ".intra.gru", intra_params, intra_macs});
    out.push_back({prefix + ".intra.fc", intra_fc_.param_count(), intra_fc_.macs() * freq_});
    out.push_back({prefix + ".intra.ln", intra_ln_.param_count(), 0.0});
    int64_t inter_params = 0;
    double inter_macs = 0.0;
    for (const auto& g : inter_) {
        inter_params += g.param_count();
        inter_macs += g.macs_per_step();
    }
    out.push_back({prefix + ".inter.gru", inter_params, inter_macs});
    out.push_back({prefix + ".inter.fc", inter_fc_.param_count(), inter_fc_.macs() * freq_});
    out.push_back({prefix + ".inter.ln", inter_ln_.param_count(), 0.0});
}

} // namespace ulse::nn
