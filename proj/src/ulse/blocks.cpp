#include "ulse/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ulse::nn {

using kernels::ConvGeom;

const char* block_type_name(BlockType t) {
    switch (t) {
        case BlockType::Conv: return "Conv";
        case BlockType::DWS: return "DWS";
        case BlockType::Ghost: return "Ghost";
        case BlockType::Rep: return "Rep";
        case BlockType::MB: return "MB";
        case BlockType::Star: return "Star";
        case BlockType::XConv: return "XConv";
        case BlockType::XDWS: return "XDWS";
        case BlockType::XMB: return "XMB";
    }
    return "?";
}

BlockType block_type_from_name(const std::string& s) {
    for (BlockType t : {BlockType::Conv, BlockType::DWS, BlockType::Ghost, BlockType::Rep,
                        BlockType::MB, BlockType::Star, BlockType::XConv, BlockType::XDWS,
                        BlockType::XMB})
        if (s == block_type_name(t)) return t;
    throw std::invalid_argument("unknown block type: " + s);
}

bool block_type_extended(BlockType t) {
    return t == BlockType::XConv || t == BlockType::XDWS || t == BlockType::XMB;
}

void BlockSpec::validate() const {
    if (stride != 1 && stride != 2) throw std::invalid_argument("block stride must be 1 or 2");
    if (groups != 1 && groups != 2) throw std::invalid_argument("block groups must be 1 or 2");
    if (out_channels < 1 || out_channels % groups)
        throw std::invalid_argument("block channels must be positive and divisible by groups");
    if (kernel_t < 1 || kernel_f < 1) throw std::invalid_argument("block kernel extents must be >= 1");
}

int mb_hidden(int in_channels, int out_channels, bool transposed) {
    return transposed ? in_channels : out_channels;
}
int star_hidden(int in_channels, int out_channels, bool transposed) {
    const int base = transposed ? in_channels : out_channels;
    return std::max(1, (2 * base + 2) / 3);
}
int ghost_primary(int out_channels) { return (out_channels + 1) / 2; }

// ----------------------------------------------------------------------- act

namespace {

// PReLU for the basic blocks, APReLU for the extended ones.
struct Act {
    bool extended = false;
    PReLU prelu;
    APReLU aprelu;

    Act() = default;
    Act(bool ext, int c, int f, const std::string& name, Rng& rng) : extended(ext) {
        if (ext)
            aprelu = APReLU(c, f, name);
        else
            prelu = PReLU(c, name);
        (void)rng;
    }
    Tensor forward(const Tensor& x, bool train) {
        return extended ? aprelu.forward(x, train) : prelu.forward(x, train);
    }
    Tensor backward(const Tensor& gy) {
        return extended ? aprelu.backward(gy) : prelu.backward(gy);
    }
    Tensor eval_only(const Tensor& x) const {
        return extended ? aprelu.eval_only(x) : prelu.eval_only(x);
    }
    void params(ParamRefs& out) { extended ? aprelu.params(out) : prelu.params(out); }
    int64_t param_count() const {
        return extended ? aprelu.param_count() : prelu.param_count();
    }
};

struct SeqState final : StreamState {
    std::vector<StatePtr> sub;
};

void report_conv(std::vector<LayerReport>& out, const std::string& name, const Conv2d& c) {
    out.push_back({name, c.param_count(), c.macs_per_frame()});
}
void report_zero(std::vector<LayerReport>& out, const std::string& name, int64_t params) {
    out.push_back({name, params, 0.0});
}

} // namespace

// ---------------------------------------------------------------------- CTFA

CTFA::CTFA(int channels, int freq, const std::string& name, Rng& rng)
    : channels_(channels), freq_(freq) {
    fita_gru = GRU(channels, 2 * channels, name + ".fita.gru", rng, /*dual_bias=*/true);
    fita_fc = Linear(2 * channels, channels, name + ".fita.fc", rng);
    auto g1 = ConvGeom::forward_geom(1, kExpansion, 1, 3, 1, 1, freq);
    auto g2 = ConvGeom::forward_geom(kExpansion, 1, 1, 3, 1, 1, freq);
    fdta_conv1 = Conv2d(g1, name + ".fdta.conv1", rng);
    fdta_conv2 = Conv2d(g2, name + ".fdta.conv2", rng);
    fdta_act = PReLU(kExpansion, name + ".fdta.act");
}

Tensor CTFA::forward(const Tensor& v, bool train) {
    const int C = v.c, T = v.t, F = v.f;
    if (C != channels_ || F != freq_)
        throw std::invalid_argument("ctfa shape mismatch: " + v.shape_str());

    // frequency-independent branch
    std::vector<double> zt(size_t(T) * C, 0.0);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            double acc = 0.0;
            for (int f = 0; f < F; ++f) acc += v.at(c, t, f) * v.at(c, t, f);
            zt[size_t(t) * C + c] = acc / F;
        }
    auto h = fita_gru.forward(zt, 1, T, train);
    auto at_lin = fita_fc.forward(h, T, train);
    Tensor at(C, T, 1);
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) at.at(c, t, 0) = sigmoid(at_lin[size_t(t) * C + c]);

    // frequency-dependent branch
    Tensor zf(1, T, F);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c) acc += v.at(c, t, f) * v.at(c, t, f);
            zf.at(0, t, f) = acc / C;
        }
    auto mid = fdta_act.forward(fdta_conv1.forward(zf, train), train);
    auto pre = fdta_conv2.forward(mid, train);
    Tensor af(1, T, F);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) af.at(0, t, f) = sigmoid(pre.at(0, t, f));

    Tensor y(C, T, F);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f)
                y.at(c, t, f) = v.at(c, t, f) * at.at(c, t, 0) * af.at(0, t, f);
    if (train) {
        c_v_ = v;
        c_at_ = at;
        c_af_ = af;
    }
    return y;
}

Tensor CTFA::backward(const Tensor& gy) {
    const int C = gy.c, T = gy.t, F = gy.f;
    Tensor gv(C, T, F);
    // direct product path
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < F; ++f)
                gv.at(c, t, f) = gy.at(c, t, f) * c_at_.at(c, t, 0) * c_af_.at(0, t, f);

    // attention map gradients
    std::vector<double> gat_lin(size_t(T) * C, 0.0);
    Tensor gaf_pre(1, T, F);
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < C; ++c) {
            double ga = 0.0;
            for (int f = 0; f < F; ++f)
                ga += gy.at(c, t, f) * c_v_.at(c, t, f) * c_af_.at(0, t, f);
            const double a = c_at_.at(c, t, 0);
            gat_lin[size_t(t) * C + c] = ga * a * (1.0 - a);
        }
        for (int f = 0; f < F; ++f) {
            double ga = 0.0;
            for (int c = 0; c < C; ++c)
                ga += gy.at(c, t, f) * c_v_.at(c, t, f) * c_at_.at(c, t, 0);
            const double a = c_af_.at(0, t, f);
            gaf_pre.at(0, t, f) = ga * a * (1.0 - a);
        }
    }

    // frequency-independent branch backward to pooled energies
    auto gh = fita_fc.backward(gat_lin, T);
    auto gzt = fita_gru.backward(gh); // [T x C]
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) {
            const double g = gzt[size_t(t) * C + c] / F;
            for (int f = 0; f < F; ++f) gv.at(c, t, f) += 2.0 * c_v_.at(c, t, f) * g;
        }

    // frequency-dependent branch backward
    auto gmid = fdta_conv2.backward(gaf_pre);
    auto gzf = fdta_conv1.backward(fdta_act.backward(gmid));
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f) {
            const double g = gzf.at(0, t, f) / C;
            for (int c = 0; c < C; ++c) gv.at(c, t, f) += 2.0 * c_v_.at(c, t, f) * g;
        }
    return gv;
}

namespace {
struct CtfaState final : StreamState {
    std::vector<double> gru_h;
    StatePtr conv1, conv2;
};
} // namespace

StatePtr CTFA::make_state() const {
    auto st = std::make_unique<CtfaState>();
    st->gru_h.assign(size_t(2) * channels_, 0.0);
    st->conv1 = fdta_conv1.make_state();
    st->conv2 = fdta_conv2.make_state();
    return st;
}

Tensor CTFA::step(const Tensor& v, StreamState& state) const {
    auto& st = dynamic_cast<CtfaState&>(state);
    const int C = v.c, F = v.f;
    std::vector<double> zt(C, 0.0);
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int f = 0; f < F; ++f) acc += v.at(c, 0, f) * v.at(c, 0, f);
        zt[c] = acc / F;
    }
    fita_gru.step(zt.data(), st.gru_h);
    std::vector<double> at(C, 0.0);
    kernels::matvec(fita_fc.weight.w.data(), C, 2 * C, st.gru_h.data(), at.data(), false);
    for (int c = 0; c < C; ++c) at[c] = sigmoid(at[c] + fita_fc.bias.w[c]);

    Tensor zf(1, 1, F);
    for (int f = 0; f < F; ++f) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += v.at(c, 0, f) * v.at(c, 0, f);
        zf.at(0, 0, f) = acc / C;
    }
    auto mid = fdta_act.eval_only(fdta_conv1.step(zf, *st.conv1));
    auto pre = fdta_conv2.step(mid, *st.conv2);

    Tensor y(C, 1, F);
    for (int c = 0; c < C; ++c)
        for (int f = 0; f < F; ++f)
            y.at(c, 0, f) = v.at(c, 0, f) * at[c] * sigmoid(pre.at(0, 0, f));
    return y;
}

void CTFA::params(ParamRefs& out) {
    fita_gru.params(out);
    fita_fc.params(out);
    fdta_conv1.params(out);
    fdta_act.params(out);
    fdta_conv2.params(out);
}

void CTFA::report(std::vector<LayerReport>& out, const std::string& prefix) const {
    out.push_back({prefix + ".fita.gru", fita_gru.param_count(), fita_gru.macs_per_step()});
    out.push_back({prefix + ".fita.fc", fita_fc.param_count(), fita_fc.macs()});
    report_conv(out, prefix + ".fdta.conv1", fdta_conv1);
    report_zero(out, prefix + ".fdta.act", fdta_act.param_count());
    report_conv(out, prefix + ".fdta.conv2", fdta_conv2);
}

// ------------------------------------------------------------------- helpers

namespace {

// grouped convolutions fall back to a single group where channel counts make
// grouping impossible (1-channel ends of the mirrored decoder)
int eff_groups(int ci, int co, int groups) {
    return (ci % groups || co % groups) ? 1 : groups;
}

ConvGeom block_geom(const BlockSpec& s, int ci, int co, int groups, int kt, int kf, int stride,
                    int f_in, int f_target) {
    groups = eff_groups(ci, co, groups);
    if (!s.transposed) return ConvGeom::forward_geom(ci, co, groups, kt, kf, stride, f_in);
    return ConvGeom::transposed_geom(ci, co, groups, kt, kf, stride, f_in, f_target);
}

int resolve_f_out(const BlockSpec& s, int f_in, int f_target) {
    if (!s.transposed) return ConvGeom::down_f(f_in, s.stride);
    if (f_target <= 0) throw std::invalid_argument("transposed block requires a target width");
    return f_target;
}

// residual only when the block preserves every axis
bool residual_ok(const BlockSpec& s, int c_in, int f_in, int f_out) {
    return s.stride == 1 && c_in == s.out_channels && f_in == f_out;
}

// shuffle applies after the grouped stage when grouping is actually effective
bool want_shuffle(const BlockSpec& s, int c) { return s.groups > 1 && c % s.groups == 0; }

} // namespace

std::unique_ptr<Block> Block::merged(const std::string&) const {
    throw std::invalid_argument("merge is only defined for Rep blocks");
}

// ----------------------------------------------------------------- ConvBlock

namespace {

class ConvBlockImpl final : public Block {
public:
    ConvBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                  int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        conv_ = Conv2d(block_geom(s, c_in, s.out_channels, s.groups, s.kernel_t, s.kernel_f,
                                  s.stride, f_in, f_out_),
                       name + ".conv", rng);
        bn_ = BatchNorm2d(s.out_channels, name + ".bn");
        act_ = Act(block_type_extended(s.type), s.out_channels, f_out_, name + ".act", rng);
        shuffle_ = want_shuffle(s, s.out_channels);
        if (block_type_extended(s.type)) ctfa_ = CTFA(s.out_channels, f_out_, name + ".ctfa", rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor y = act_.forward(bn_.forward(conv_.forward(x, train), train), train);
        if (shuffle_) y = channel_shuffle(y, spec_.groups);
        if (ctfa_) y = ctfa_->forward(y, train);
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor g = gy;
        if (ctfa_) g = ctfa_->backward(g);
        if (shuffle_) g = channel_unshuffle(g, spec_.groups);
        return conv_.backward(bn_.backward(act_.backward(g)));
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(conv_.make_state());
        if (ctfa_) st->sub.push_back(ctfa_->make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor y = act_.eval_only(bn_.eval_only(conv_.step(x, *st.sub[0])));
        if (shuffle_) y = channel_shuffle(y, spec_.groups);
        if (ctfa_) y = ctfa_->step(y, *st.sub[1]);
        return y;
    }

    void params(ParamRefs& out) override {
        conv_.params(out);
        bn_.params(out);
        act_.params(out);
        if (ctfa_) ctfa_->params(out);
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override { out.push_back(&bn_); }

    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".conv", conv_);
        report_zero(out, name_ + ".bn", bn_.param_count());
        report_zero(out, name_ + ".act", act_.param_count());
        if (ctfa_) ctfa_->report(out, name_ + ".ctfa");
    }

private:
    Conv2d conv_;
    BatchNorm2d bn_;
    Act act_;
    bool shuffle_ = false;
    std::optional<CTFA> ctfa_;
};

// ------------------------------------------------------------------ DWSBlock

class DWSBlockImpl final : public Block {
public:
    DWSBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                 int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        const int co = s.out_channels;
        pw_ = Conv2d(block_geom(s, c_in, co, s.groups, 1, 1, 1, f_in, f_in), name + ".pw", rng);
        bn1_ = BatchNorm2d(co, name + ".bn1");
        a1_ = Act(block_type_extended(s.type), co, f_in, name + ".act1", rng);
        dw_ = Conv2d(block_geom(s, co, co, co, s.kernel_t, s.kernel_f, s.stride, f_in, f_out_),
                     name + ".dw", rng);
        bn2_ = BatchNorm2d(co, name + ".bn2");
        a2_ = Act(block_type_extended(s.type), co, f_out_, name + ".act2", rng);
        shuffle_ = want_shuffle(s, co);
        if (block_type_extended(s.type)) ctfa_ = CTFA(co, f_out_, name + ".ctfa", rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor h = a1_.forward(bn1_.forward(pw_.forward(x, train), train), train);
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        Tensor y = a2_.forward(bn2_.forward(dw_.forward(h, train), train), train);
        if (ctfa_) y = ctfa_->forward(y, train);
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor g = gy;
        if (ctfa_) g = ctfa_->backward(g);
        g = dw_.backward(bn2_.backward(a2_.backward(g)));
        if (shuffle_) g = channel_unshuffle(g, spec_.groups);
        return pw_.backward(bn1_.backward(a1_.backward(g)));
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(pw_.make_state());
        st->sub.push_back(dw_.make_state());
        if (ctfa_) st->sub.push_back(ctfa_->make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor h = a1_.eval_only(bn1_.eval_only(pw_.step(x, *st.sub[0])));
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        Tensor y = a2_.eval_only(bn2_.eval_only(dw_.step(h, *st.sub[1])));
        if (ctfa_) y = ctfa_->step(y, *st.sub[2]);
        return y;
    }

    void params(ParamRefs& out) override {
        pw_.params(out);
        bn1_.params(out);
        a1_.params(out);
        dw_.params(out);
        bn2_.params(out);
        a2_.params(out);
        if (ctfa_) ctfa_->params(out);
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override {
        out.push_back(&bn1_);
        out.push_back(&bn2_);
    }

    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".pw", pw_);
        report_zero(out, name_ + ".bn1", bn1_.param_count());
        report_zero(out, name_ + ".act1", a1_.param_count());
        report_conv(out, name_ + ".dw", dw_);
        report_zero(out, name_ + ".bn2", bn2_.param_count());
        report_zero(out, name_ + ".act2", a2_.param_count());
        if (ctfa_) ctfa_->report(out, name_ + ".ctfa");
    }

    Conv2d pw_, dw_;
    BatchNorm2d bn1_, bn2_;
    Act a1_, a2_;
    bool shuffle_ = false;
    std::optional<CTFA> ctfa_;
};

// ---------------------------------------------------------------- GhostBlock

class GhostBlockImpl final : public Block {
public:
    GhostBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                   int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        cp_ = ghost_primary(s.out_channels);
        cg_ = s.out_channels - cp_;
        primary_ = Conv2d(block_geom(s, c_in, cp_, s.groups, s.kernel_t, s.kernel_f, s.stride,
                                     f_in, f_out_),
                          name + ".primary", rng);
        bn1_ = BatchNorm2d(cp_, name + ".bn1");
        a1_ = Act(block_type_extended(s.type), cp_, f_out_, name + ".act1", rng);
        if (cg_ > 0) {
            cheap_ = Conv2d(block_geom(s, cg_, cg_, cg_, 1, 5, 1, f_out_, f_out_),
                            name + ".cheap", rng);
            bn2_ = BatchNorm2d(cg_, name + ".bn2");
            a2_ = Act(block_type_extended(s.type), cg_, f_out_, name + ".act2", rng);
        }
        shuffle_ = want_shuffle(s, s.out_channels);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor p = a1_.forward(bn1_.forward(primary_.forward(x, train), train), train);
        if (cg_ == 0) return shuffle_ ? channel_shuffle(p, spec_.groups) : p;
        Tensor slice(cg_, p.t, p.f);
        for (int c = 0; c < cg_; ++c)
            for (int t = 0; t < p.t; ++t)
                std::copy(p.row(c, t), p.row(c, t) + p.f, slice.row(c, t));
        Tensor gh = a2_.forward(bn2_.forward(cheap_.forward(slice, train), train), train);
        Tensor y(spec_.out_channels, p.t, p.f);
        for (int c = 0; c < cp_; ++c)
            for (int t = 0; t < p.t; ++t) std::copy(p.row(c, t), p.row(c, t) + p.f, y.row(c, t));
        for (int c = 0; c < cg_; ++c)
            for (int t = 0; t < p.t; ++t)
                std::copy(gh.row(c, t), gh.row(c, t) + p.f, y.row(cp_ + c, t));
        return shuffle_ ? channel_shuffle(y, spec_.groups) : y;
    }

    Tensor backward(const Tensor& gy_in) override {
        Tensor gy = shuffle_ ? channel_unshuffle(gy_in, spec_.groups) : gy_in;
        Tensor gp(cp_, gy.t, gy.f);
        for (int c = 0; c < cp_; ++c)
            for (int t = 0; t < gy.t; ++t)
                std::copy(gy.row(c, t), gy.row(c, t) + gy.f, gp.row(c, t));
        if (cg_ > 0) {
            Tensor ggh(cg_, gy.t, gy.f);
            for (int c = 0; c < cg_; ++c)
                for (int t = 0; t < gy.t; ++t)
                    std::copy(gy.row(cp_ + c, t), gy.row(cp_ + c, t) + gy.f, ggh.row(c, t));
            Tensor gslice = cheap_.backward(bn2_.backward(a2_.backward(ggh)));
            for (int c = 0; c < cg_; ++c)
                for (int t = 0; t < gy.t; ++t)
                    for (int f = 0; f < gy.f; ++f) gp.at(c, t, f) += gslice.at(c, t, f);
        }
        return primary_.backward(bn1_.backward(a1_.backward(gp)));
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(primary_.make_state());
        if (cg_ > 0) st->sub.push_back(cheap_.make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor p = a1_.eval_only(bn1_.eval_only(primary_.step(x, *st.sub[0])));
        if (cg_ == 0) return shuffle_ ? channel_shuffle(p, spec_.groups) : p;
        Tensor slice(cg_, 1, p.f);
        for (int c = 0; c < cg_; ++c) std::copy(p.row(c, 0), p.row(c, 0) + p.f, slice.row(c, 0));
        Tensor gh = a2_.eval_only(bn2_.eval_only(cheap_.step(slice, *st.sub[1])));
        Tensor y(spec_.out_channels, 1, p.f);
        for (int c = 0; c < cp_; ++c) std::copy(p.row(c, 0), p.row(c, 0) + p.f, y.row(c, 0));
        for (int c = 0; c < cg_; ++c) std::copy(gh.row(c, 0), gh.row(c, 0) + p.f, y.row(cp_ + c, 0));
        return shuffle_ ? channel_shuffle(y, spec_.groups) : y;
    }

    void params(ParamRefs& out) override {
        primary_.params(out);
        bn1_.params(out);
        a1_.params(out);
        if (cg_ > 0) {
            cheap_.params(out);
            bn2_.params(out);
            a2_.params(out);
        }
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override {
        out.push_back(&bn1_);
        if (cg_ > 0) out.push_back(&bn2_);
    }

    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".primary", primary_);
        report_zero(out, name_ + ".bn1", bn1_.param_count());
        report_zero(out, name_ + ".act1", a1_.param_count());
        if (cg_ > 0) {
            report_conv(out, name_ + ".cheap", cheap_);
            report_zero(out, name_ + ".bn2", bn2_.param_count());
            report_zero(out, name_ + ".act2", a2_.param_count());
        }
    }

private:
    int cp_ = 0, cg_ = 0;
    Conv2d primary_, cheap_;
    BatchNorm2d bn1_, bn2_;
    Act a1_, a2_;
    bool shuffle_ = false;
};

// ------------------------------------------------------------------- MBBlock

class MBBlockImpl final : public Block {
public:
    MBBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        const int h = mb_hidden(c_in, s.out_channels, s.transposed);
        const bool ext = block_type_extended(s.type);
        pw1_ = Conv2d(block_geom(s, c_in, h, s.groups, 1, 1, 1, f_in, f_in), name + ".pw1", rng);
        bn1_ = BatchNorm2d(h, name + ".bn1");
        a1_ = Act(ext, h, f_in, name + ".act1", rng);
        dw_ = Conv2d(block_geom(s, h, h, h, s.kernel_t, s.kernel_f, s.stride, f_in, f_out_),
                     name + ".dw", rng);
        bn2_ = BatchNorm2d(h, name + ".bn2");
        a2_ = Act(ext, h, f_out_, name + ".act2", rng);
        pw2_ = Conv2d(block_geom(s, h, s.out_channels, s.groups, 1, 1, 1, f_out_, f_out_),
                      name + ".pw2", rng);
        bn3_ = BatchNorm2d(s.out_channels, name + ".bn3");
        bn4_ = BatchNorm2d(s.out_channels, name + ".bn4");
        residual_ = residual_ok(s, c_in, f_in, f_out_);
        shuffle_ = want_shuffle(s, h);
        if (ext) ctfa_ = CTFA(s.out_channels, f_out_, name + ".ctfa", rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor h = a1_.forward(bn1_.forward(pw1_.forward(x, train), train), train);
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        Tensor d = a2_.forward(bn2_.forward(dw_.forward(h, train), train), train);
        Tensor o = bn4_.forward(bn3_.forward(pw2_.forward(d, train), train), train);
        if (residual_) o = o + x;
        if (ctfa_) o = ctfa_->forward(o, train);
        return o;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor g = gy;
        if (ctfa_) g = ctfa_->backward(g);
        Tensor gres = g; // through the residual branch, if any
        g = pw2_.backward(bn3_.backward(bn4_.backward(g)));
        g = dw_.backward(bn2_.backward(a2_.backward(g)));
        if (shuffle_) g = channel_unshuffle(g, spec_.groups);
        g = pw1_.backward(bn1_.backward(a1_.backward(g)));
        if (residual_) g = g + gres;
        return g;
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(pw1_.make_state());
        st->sub.push_back(dw_.make_state());
        st->sub.push_back(pw2_.make_state());
        if (ctfa_) st->sub.push_back(ctfa_->make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor h = a1_.eval_only(bn1_.eval_only(pw1_.step(x, *st.sub[0])));
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        Tensor d = a2_.eval_only(bn2_.eval_only(dw_.step(h, *st.sub[1])));
        Tensor o = bn4_.eval_only(bn3_.eval_only(pw2_.step(d, *st.sub[2])));
        if (residual_) o = o + x;
        if (ctfa_) o = ctfa_->step(o, *st.sub[3]);
        return o;
    }

    void params(ParamRefs& out) override {
        pw1_.params(out);
        bn1_.params(out);
        a1_.params(out);
        dw_.params(out);
        bn2_.params(out);
        a2_.params(out);
        pw2_.params(out);
        bn3_.params(out);
        bn4_.params(out);
        if (ctfa_) ctfa_->params(out);
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override {
        out.push_back(&bn1_);
        out.push_back(&bn2_);
        out.push_back(&bn3_);
        out.push_back(&bn4_);
    }

    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".pw1", pw1_);
        report_zero(out, name_ + ".bn1", bn1_.param_count());
        report_zero(out, name_ + ".act1", a1_.param_count());
        report_conv(out, name_ + ".dw", dw_);
        report_zero(out, name_ + ".bn2", bn2_.param_count());
        report_zero(out, name_ + ".act2", a2_.param_count());
        report_conv(out, name_ + ".pw2", pw2_);
        report_zero(out, name_ + ".bn3", bn3_.param_count());
        report_zero(out, name_ + ".bn4", bn4_.param_count());
        if (ctfa_) ctfa_->report(out, name_ + ".ctfa");
    }

private:
    Conv2d pw1_, dw_, pw2_;
    BatchNorm2d bn1_, bn2_, bn3_, bn4_;
    Act a1_, a2_;
    bool residual_ = false, shuffle_ = false;
    std::optional<CTFA> ctfa_;
};

// ----------------------------------------------------------------- StarBlock

class StarBlockImpl final : public Block {
public:
    StarBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                  int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        const int h = star_hidden(c_in, s.out_channels, s.transposed);
        pwa_ = Conv2d(block_geom(s, c_in, h, s.groups, 1, 1, 1, f_in, f_in), name + ".pwa", rng);
        bna_ = BatchNorm2d(h, name + ".bna");
        act_ = Act(false, h, f_in, name + ".act", rng);
        pwb_ = Conv2d(block_geom(s, c_in, h, s.groups, 1, 1, 1, f_in, f_in), name + ".pwb", rng);
        bnb_ = BatchNorm2d(h, name + ".bnb");
        pwc_ = Conv2d(block_geom(s, h, s.out_channels, s.groups, 1, 1, 1, f_in, f_in),
                      name + ".pwc", rng);
        bnc_ = BatchNorm2d(s.out_channels, name + ".bnc");
        dw_ = Conv2d(block_geom(s, s.out_channels, s.out_channels, s.out_channels, s.kernel_t,
                                s.kernel_f, s.stride, f_in, f_out_),
                     name + ".dw", rng);
        bnd_ = BatchNorm2d(s.out_channels, name + ".bnd");
        residual_ = residual_ok(s, c_in, f_in, f_out_);
        shuffle_ = want_shuffle(s, star_hidden(c_in, s.out_channels, s.transposed));
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor u = act_.forward(bna_.forward(pwa_.forward(x, train), train), train);
        Tensor v = bnb_.forward(pwb_.forward(x, train), train);
        Tensor m = u * v; // star operation
        if (train) {
            c_u_ = u;
            c_v_ = v;
        }
        if (shuffle_) m = channel_shuffle(m, spec_.groups);
        Tensor w = bnc_.forward(pwc_.forward(m, train), train);
        Tensor o = bnd_.forward(dw_.forward(w, train), train);
        if (residual_) o = o + x;
        return o;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gres = gy;
        Tensor g = dw_.backward(bnd_.backward(gy));
        g = pwc_.backward(bnc_.backward(g));
        if (shuffle_) g = channel_unshuffle(g, spec_.groups);
        Tensor gu = g * c_v_;
        Tensor gv = g * c_u_;
        Tensor gx = pwa_.backward(bna_.backward(act_.backward(gu)));
        gx = gx + pwb_.backward(bnb_.backward(gv));
        if (residual_) gx = gx + gres;
        return gx;
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(pwa_.make_state());
        st->sub.push_back(pwb_.make_state());
        st->sub.push_back(pwc_.make_state());
        st->sub.push_back(dw_.make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor u = act_.eval_only(bna_.eval_only(pwa_.step(x, *st.sub[0])));
        Tensor v = bnb_.eval_only(pwb_.step(x, *st.sub[1]));
        Tensor m = u * v;
        if (shuffle_) m = channel_shuffle(m, spec_.groups);
        Tensor w = bnc_.eval_only(pwc_.step(m, *st.sub[2]));
        Tensor o = bnd_.eval_only(dw_.step(w, *st.sub[3]));
        if (residual_) o = o + x;
        return o;
    }

    void params(ParamRefs& out) override {
        pwa_.params(out);
        bna_.params(out);
        act_.params(out);
        pwb_.params(out);
        bnb_.params(out);
        pwc_.params(out);
        bnc_.params(out);
        dw_.params(out);
        bnd_.params(out);
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override {
        out.push_back(&bna_);
        out.push_back(&bnb_);
        out.push_back(&bnc_);
        out.push_back(&bnd_);
    }

    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".pwa", pwa_);
        report_zero(out, name_ + ".bna", bna_.param_count());
        report_zero(out, name_ + ".act", act_.param_count());
        report_conv(out, name_ + ".pwb", pwb_);
        report_zero(out, name_ + ".bnb", bnb_.param_count());
        report_conv(out, name_ + ".pwc", pwc_);
        report_zero(out, name_ + ".bnc", bnc_.param_count());
        report_conv(out, name_ + ".dw", dw_);
        report_zero(out, name_ + ".bnd", bnd_.param_count());
    }

private:
    Conv2d pwa_, pwb_, pwc_, dw_;
    BatchNorm2d bna_, bnb_, bnc_, bnd_;
    Act act_;
    Tensor c_u_, c_v_;
    bool residual_ = false, shuffle_ = false;
};

// ------------------------------------------------------------------ RepBlock

// A sum of parallel convolution branches (each with its own BN) plus an
// optional BN-only identity branch, foldable into a single conv + identity BN.
struct RepStage {
    Conv2d main, dup;
    BatchNorm2d bn_main, bn_dup, bn_id;
    bool has_id = false;
    bool transposed = false;
    Tensor c_x_;

    RepStage() = default;
    RepStage(const ConvGeom& geom, bool identity_ok, const std::string& name, Rng& rng) {
        main = Conv2d(geom, name + ".main", rng);
        dup = Conv2d(geom, name + ".dup", rng);
        bn_main = BatchNorm2d(geom.co, name + ".bn_main");
        bn_dup = BatchNorm2d(geom.co, name + ".bn_dup");
        has_id = identity_ok && geom.ci == geom.co && geom.stride == 1 && geom.f_in == geom.f_out;
        transposed = geom.transposed;
        if (has_id) bn_id = BatchNorm2d(geom.co, name + ".bn_id");
    }

    Tensor forward(const Tensor& x, bool train) {
        Tensor y = bn_main.forward(main.forward(x, train), train);
        Tensor y2 = bn_dup.forward(dup.forward(x, train), train);
        y = y + y2;
        if (has_id) y = y + bn_id.forward(x, train);
        if (train) c_x_ = x;
        return y;
    }

    Tensor backward(const Tensor& gy) {
        Tensor gx = main.backward(bn_main.backward(gy));
        gx = gx + dup.backward(bn_dup.backward(gy));
        if (has_id) gx = gx + bn_id.backward(gy);
        return gx;
    }

    Tensor eval_forward(const Tensor& x, StreamState& st_main, StreamState& st_dup) const {
        Tensor y = bn_main.eval_only(main.step(x, st_main)) +
                   bn_dup.eval_only(dup.step(x, st_dup));
        if (has_id) y = y + bn_id.eval_only(x);
        return y;
    }

    void params(ParamRefs& out) {
        main.params(out);
        bn_main.params(out);
        dup.params(out);
        bn_dup.params(out);
        if (has_id) bn_id.params(out);
    }

    // Fold all branches into target (a conv with bias followed by a BN that is
    // configured as an exact pass-through).
    void merge_into(Conv2d& conv, BatchNorm2d& bn) const {
        const auto& g = main.geom();
        std::vector<double> w(g.weight_count(), 0.0), b(g.co, 0.0);
        auto fold = [&](const Conv2d& c, const BatchNorm2d& cbn) {
            std::vector<double> a, d;
            cbn.effective(a, d);
            const size_t per_co = size_t(g.ci_g()) * g.kt * g.kf;
            for (int co = 0; co < g.co; ++co) {
                for (size_t i = 0; i < per_co; ++i)
                    w[co * per_co + i] += a[co] * c.weight.w[co * per_co + i];
                b[co] += a[co] * c.bias.w[co] + d[co];
            }
        };
        fold(main, bn_main);
        fold(dup, bn_dup);
        if (has_id) {
            std::vector<double> a, d;
            bn_id.effective(a, d);
            const size_t per_co = size_t(g.ci_g()) * g.kt * g.kf;
            // identity tap: current-frame time index, center frequency tap
            const int a_tap = transposed ? 0 : g.kt - 1;
            for (int co = 0; co < g.co; ++co) {
                const int ci = co % g.ci_g();
                w[co * per_co + (size_t(ci) * g.kt + a_tap) * g.kf + g.pad_left] += a[co];
                b[co] += d[co];
            }
        }
        conv.weight.w = w;
        conv.bias.w = b;
        std::vector<double> ones(g.co, 1.0), zeros(g.co, 0.0);
        bn.set_affine_passthrough(ones, zeros);
    }
};

class RepBlockImpl final : public Block {
public:
    RepBlockImpl(const BlockSpec& s, int c_in, int f_in, const std::string& name, Rng& rng,
                 int f_target) {
        spec_ = s;
        c_in_ = c_in;
        f_in_ = f_in;
        f_out_ = resolve_f_out(s, f_in, f_target);
        name_ = name;
        const int co = s.out_channels;
        s1_ = RepStage(block_geom(s, c_in, co, s.groups, 1, 1, 1, f_in, f_in), true,
                       name + ".pw", rng);
        a1_ = Act(false, co, f_in, name + ".act1", rng);
        s2_ = RepStage(block_geom(s, co, co, co, s.kernel_t, s.kernel_f, s.stride, f_in, f_out_),
                       true, name + ".dw", rng);
        a2_ = Act(false, co, f_out_, name + ".act2", rng);
        shuffle_ = want_shuffle(s, co);
    }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor h = a1_.forward(s1_.forward(x, train), train);
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        return a2_.forward(s2_.forward(h, train), train);
    }

    Tensor backward(const Tensor& gy) override {
        Tensor g = s2_.backward(a2_.backward(gy));
        if (shuffle_) g = channel_unshuffle(g, spec_.groups);
        return s1_.backward(a1_.backward(g));
    }

    StatePtr make_state() const override {
        auto st = std::make_unique<SeqState>();
        st->sub.push_back(s1_.main.make_state());
        st->sub.push_back(s1_.dup.make_state());
        st->sub.push_back(s2_.main.make_state());
        st->sub.push_back(s2_.dup.make_state());
        return st;
    }

    Tensor step(const Tensor& x, StreamState& state) const override {
        auto& st = dynamic_cast<SeqState&>(state);
        Tensor h = a1_.eval_only(s1_.eval_forward(x, *st.sub[0], *st.sub[1]));
        if (shuffle_) h = channel_shuffle(h, spec_.groups);
        return a2_.eval_only(s2_.eval_forward(h, *st.sub[2], *st.sub[3]));
    }

    void params(ParamRefs& out) override {
        s1_.params(out);
        a1_.params(out);
        s2_.params(out);
        a2_.params(out);
    }

    void batchnorms(std::vector<BatchNorm2d*>& out) override {
        out.push_back(&s1_.bn_main);
        out.push_back(&s1_.bn_dup);
        if (s1_.has_id) out.push_back(&s1_.bn_id);
        out.push_back(&s2_.bn_main);
        out.push_back(&s2_.bn_dup);
        if (s2_.has_id) out.push_back(&s2_.bn_id);
    }

    // Rep complexity is reported in merged (inference) form, which is exactly
    // the DWS layout.
    void report(std::vector<LayerReport>& out) const override {
        report_conv(out, name_ + ".pw", s1_.main);
        report_zero(out, name_ + ".bn1", 2 * spec_.out_channels);
        report_zero(out, name_ + ".act1", a1_.param_count());
        report_conv(out, name_ + ".dw", s2_.main);
        report_zero(out, name_ + ".bn2", 2 * spec_.out_channels);
        report_zero(out, name_ + ".act2", a2_.param_count());
    }

    std::unique_ptr<Block> merged(const std::string& name) const override {
        BlockSpec ds = spec_;
        ds.type = BlockType::DWS;
        Rng scratch(1);
        auto blk = std::make_unique<DWSBlockImpl>(ds, c_in_, f_in_, name, scratch,
                                                  spec_.transposed ? f_out_ : -1);
        s1_.merge_into(blk->pw_, blk->bn1_);
        s2_.merge_into(blk->dw_, blk->bn2_);
        blk->a1_.prelu.alpha.w = a1_.prelu.alpha.w;
        blk->a2_.prelu.alpha.w = a2_.prelu.alpha.w;
        return blk;
    }

private:
    RepStage s1_, s2_;
    Act a1_, a2_;
    bool shuffle_ = false;
};

} // namespace

std::unique_ptr<Block> build_block(const BlockSpec& spec, int in_channels, int f_in,
                                   const std::string& name, Rng& rng, int f_target) {
    spec.validate();
    if (in_channels < 1) throw std::invalid_argument("block input channels must be >= 1");
    switch (spec.type) {
        case BlockType::Conv:
        case BlockType::XConv:
            return std::make_unique<ConvBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
        case BlockType::DWS:
        case BlockType::XDWS:
            return std::make_unique<DWSBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
        case BlockType::Ghost:
            return std::make_unique<GhostBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
        case BlockType::Rep:
            return std::make_unique<RepBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
        case BlockType::MB:
        case BlockType::XMB:
            return std::make_unique<MBBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
        case BlockType::Star:
            return std::make_unique<StarBlockImpl>(spec, in_channels, f_in, name, rng, f_target);
    }
    throw std::invalid_argument("unknown block type");
}

} // namespace ulse::nn
