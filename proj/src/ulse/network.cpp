#include "ulse/network.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ulse/fft.hpp"

namespace ulse::nn {

using json = nlohmann::json;
namespace fe = ulse::frontend;

void ArchitectureSpec::validate(bool enforce_block_count) const {
    if (enforce_block_count && int(encoder_blocks.size()) != kEncoderBlocks)
        throw std::invalid_argument("architecture requires exactly " +
                                    std::to_string(kEncoderBlocks) + " encoder blocks, got " +
                                    std::to_string(encoder_blocks.size()));
    if (encoder_blocks.empty()) throw std::invalid_argument("architecture has no encoder blocks");
    if (input_channels < 1) throw std::invalid_argument("input_channels must be >= 1");
    for (size_t i = 0; i < encoder_blocks.size(); ++i) {
        try {
            encoder_blocks[i].validate();
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("block " + std::to_string(i + 1) + ": " + e.what());
        }
    }
}

std::string ArchitectureSpec::to_json() const {
    json j;
    for (const auto& b : encoder_blocks) {
        j["types"].push_back(block_type_name(b.type));
        j["strides"].push_back(b.stride);
        j["groups"].push_back(b.groups);
        j["channels"].push_back(b.out_channels);
        j["kernels"].push_back({b.kernel_t, b.kernel_f});
    }
    j["input_channels"] = input_channels;
    return j.dump(2) + "\n";
}

ArchitectureSpec ArchitectureSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("architecture config is not valid JSON: ") +
                                    e.what());
    }
    ArchitectureSpec spec;
    for (const char* key : {"types", "strides", "groups", "channels", "kernels"})
        if (!j.contains(key) || !j[key].is_array())
            throw std::invalid_argument(std::string("architecture config missing key: ") + key);
    const size_t n = j["types"].size();
    for (const char* key : {"strides", "groups", "channels", "kernels"})
        if (j[key].size() != n)
            throw std::invalid_argument(std::string("architecture config key has wrong length: ") +
                                        key);
    for (size_t i = 0; i < n; ++i) {
        BlockSpec b;
        b.type = block_type_from_name(j["types"][i].get<std::string>());
        b.stride = j["strides"][i].get<int>();
        b.groups = j["groups"][i].get<int>();
        b.out_channels = j["channels"][i].get<int>();
        auto k = j["kernels"][i];
        if (!k.is_array() || k.size() != 2)
            throw std::invalid_argument("kernels entries must be [time, freq] pairs");
        b.kernel_t = k[0].get<int>();
        b.kernel_f = k[1].get<int>();
        spec.encoder_blocks.push_back(b);
    }
    if (j.contains("input_channels")) spec.input_channels = j["input_channels"].get<int>();
    return spec;
}

ArchitectureSpec ArchitectureSpec::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open architecture config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void ArchitectureSpec::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write architecture config: " + path);
    f << to_json();
}

ArchitectureSpec ArchitectureSpec::prototype(BlockType type, int channels) {
    ArchitectureSpec spec;
    for (int i = 0; i < kEncoderBlocks; ++i) {
        BlockSpec b;
        b.type = type;
        b.stride = i < 2 ? 2 : 1;
        b.groups = 1;
        b.out_channels = channels;
        b.kernel_t = 3;
        b.kernel_f = 3;
        spec.encoder_blocks.push_back(b);
    }
    return spec;
}

// ----------------------------------------------------------------------- BM/BS

namespace {

const std::vector<double>& merge_transpose() {
    static const std::vector<double> t = [] {
        const auto& fb = fe::ErbFilterbank::instance();
        std::vector<double> m(size_t(fe::kBins) * fe::kErbBands);
        for (int r = 0; r < fe::kErbBands; ++r)
            for (int c = 0; c < fe::kBins; ++c)
                m[size_t(c) * fe::kErbBands + r] = fb.merge_matrix[size_t(r) * fe::kBins + c];
        return m;
    }();
    return t;
}

const std::vector<double>& split_transpose() {
    static const std::vector<double> t = [] {
        const auto& fb = fe::ErbFilterbank::instance();
        std::vector<double> m(size_t(fe::kErbBands) * fe::kBins);
        for (int r = 0; r < fe::kBins; ++r)
            for (int c = 0; c < fe::kErbBands; ++c)
                m[size_t(c) * fe::kBins + r] = fb.split_matrix[size_t(r) * fe::kErbBands + c];
        return m;
    }();
    return t;
}

} // namespace

// ---------------------------------------------------------------------- Model

struct ModelState {
    std::vector<StatePtr> blocks; // encoder order then decoder order
    StatePtr bottleneck;
    StatePtr mask_conv;
};

Model Model::assemble(const ArchitectureSpec& spec, uint64_t seed, bool enforce_block_count) {
    spec.validate(enforce_block_count);
    Model m;
    m.spec_ = spec;
    m.seed_ = seed;
    Rng rng(seed ? seed : 0x5eed);

    const int n = int(spec.encoder_blocks.size());
    int f = fe::kErbBands;
    int c = spec.input_channels;
    std::vector<int> f_ins(n), c_ins(n);
    for (int i = 0; i < n; ++i) {
        f_ins[i] = f;
        c_ins[i] = c;
        try {
            m.encoder_.push_back(build_block(spec.encoder_blocks[i], c, f,
                                             "enc" + std::to_string(i + 1), rng));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("encoder block " + std::to_string(i + 1) + ": " + e.what());
        }
        f = m.encoder_.back()->f_out();
        c = m.encoder_.back()->c_out();
    }

    GDPRNNConfig cfg = spec.bottleneck;
    if (cfg.groups == 2 && c % 2) cfg.groups = 1;
    try {
        m.bottleneck_ = GDPRNN(c, f, cfg, "bottleneck", rng);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("bottleneck: ") + e.what());
    }

    // mirrored decoder: block i undoes encoder block n-1-i
    for (int i = 0; i < n; ++i) {
        const int src = n - 1 - i;
        BlockSpec b = spec.encoder_blocks[src];
        b.transposed = true;
        b.out_channels = c_ins[src];
        if (b.out_channels % b.groups || c % b.groups) b.groups = 1;
        try {
            m.decoder_.push_back(build_block(b, c, f, "dec" + std::to_string(i + 1), rng,
                                             f_ins[src]));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("decoder block " + std::to_string(i + 1) + ": " + e.what());
        }
        f = f_ins[src];
        c = c_ins[src];
    }

    auto head_geom = kernels::ConvGeom::forward_geom(c, 1, 1, 1, 1, 1, fe::kErbBands);
    m.mask_conv_ = Conv2d(head_geom, "mask.conv", rng);
    return m;
}

Tensor Model::mask_head(const Tensor& x, bool train) {
    Tensor pre = mask_conv_.forward(x, train);
    Tensor mask(pre.c, pre.t, pre.f);
    for (size_t i = 0; i < pre.v.size(); ++i) mask.v[i] = sigmoid(pre.v[i]);
    c_mask_pre_bs_ = mask;
    return mask;
}

Tensor Model::forward(const Tensor& noisy_logpower, bool train) {
    if (noisy_logpower.c != spec_.input_channels || noisy_logpower.f != fe::kBins)
        throw std::invalid_argument("model input must be [" +
                                    std::to_string(spec_.input_channels) + " x T x 257], got " +
                                    noisy_logpower.shape_str());
    const auto& fb = fe::ErbFilterbank::instance();
    Tensor x = fe::band_merge(noisy_logpower, fb);

    enc_outs_.clear();
    for (auto& blk : encoder_) {
        x = blk->forward(x, train);
        enc_outs_.push_back(x);
    }
    const size_t n = decoder_.size();
    Tensor d = bottleneck_.forward(x, train) + enc_outs_.back();
    for (size_t i = 0; i < n; ++i) {
        d = decoder_[i]->forward(d, train);
        if (i + 1 < n) d = d + enc_outs_[n - 2 - i];
    }
    Tensor mask = mask_head(d, train);
    return fe::band_split(mask, fb);
}

Tensor Model::backward(const Tensor& gmask) {
    Tensor g129(gmask.c, gmask.t, fe::kErbBands);
    kernels::freq_matmul(split_transpose(), fe::kErbBands, fe::kBins, gmask, g129);
    for (size_t i = 0; i < g129.v.size(); ++i) {
        const double mval = c_mask_pre_bs_.v[i];
        g129.v[i] *= mval * (1.0 - mval);
    }
    Tensor g = mask_conv_.backward(g129);

    // decoder block i consumed (previous output + encoder stage n-1-i output)
    const int n = int(decoder_.size());
    std::vector<Tensor> enc_grads(n);
    for (int i = n - 1; i >= 0; --i) {
        Tensor gin = decoder_[i]->backward(g);
        enc_grads[n - 1 - i] = gin;
        g = gin;
    }
    g = enc_grads[n - 1] + bottleneck_.backward(g);
    for (int i = n - 1; i >= 0; --i) {
        g = encoder_[i]->backward(g);
        if (i > 0) g = g + enc_grads[i - 1];
    }
    Tensor g257(gmask.c, gmask.t, fe::kBins);
    kernels::freq_matmul(merge_transpose(), fe::kBins, fe::kErbBands, g, g257);
    return g257;
}

std::unique_ptr<ModelState> Model::make_state() const {
    auto st = std::make_unique<ModelState>();
    for (const auto& b : encoder_) st->blocks.push_back(b->make_state());
    for (const auto& b : decoder_) st->blocks.push_back(b->make_state());
    st->bottleneck = bottleneck_.make_state();
    st->mask_conv = mask_conv_.make_state();
    return st;
}

Tensor Model::forward_frame(const Tensor& lp, ModelState& st) const {
    const auto& fb = fe::ErbFilterbank::instance();
    Tensor x = fe::band_merge(lp, fb);
    std::vector<Tensor> enc_outs;
    size_t si = 0;
    for (const auto& blk : encoder_) {
        x = blk->step(x, *st.blocks[si++]);
        enc_outs.push_back(x);
    }
    Tensor d = bottleneck_.step(x, *st.bottleneck) + enc_outs.back();
    for (size_t i = 0; i < decoder_.size(); ++i) {
        d = decoder_[i]->step(d, *st.blocks[si++]);
        if (i + 1 < decoder_.size()) d = d + enc_outs[decoder_.size() - 2 - i];
    }
    Tensor pre = mask_conv_.step(d, *st.mask_conv);
    Tensor mask(pre.c, pre.t, pre.f);
    for (size_t i = 0; i < pre.v.size(); ++i) mask.v[i] = sigmoid(pre.v[i]);
    return fe::band_split(mask, fb);
}

frontend::Spectrogram apply_mask(const frontend::Spectrogram& noisy, const Tensor& mask) {
    if (mask.t != noisy.frames || mask.f != fe::kBins)
        throw std::invalid_argument("mask shape does not match spectrogram");
    frontend::Spectrogram out(noisy.frames);
    for (int t = 0; t < noisy.frames; ++t)
        for (int k = 0; k < fe::kBins; ++k) out.at(t, k) = noisy.at(t, k) * mask.at(0, t, k);
    return out;
}

std::vector<double> Model::enhance(const std::vector<double>& noisy) const {
    const size_t len = noisy.size();
    std::vector<double> padded = noisy;
    if (padded.size() < size_t(fe::kFftSize)) padded.resize(fe::kFftSize, 0.0);
    const size_t rem = (padded.size() - fe::kFftSize) % fe::kHop;
    if (rem) padded.resize(padded.size() + (fe::kHop - rem), 0.0);

    auto spec = fe::stft(padded);
    auto lp = fe::log_power(spec);
    Tensor mask = const_cast<Model*>(this)->forward(lp, false);
    auto out = fe::istft(apply_mask(spec, mask));
    out.resize(len);
    return out;
}

Model::Stream::Stream(const Model& m) : model_(m), state_(m.make_state()) {}

std::vector<double> Model::Stream::push(const double* hop) {
    buffer_.insert(buffer_.end(), hop, hop + fe::kHop);
    ++pushed_;
    ++hops_seen_;
    std::vector<double> out;
    while (buffer_.size() >= size_t(fe::kFftSize)) {
        const auto& w = fe::hann_window();
        std::vector<double> frame(fe::kFftSize);
        for (int i = 0; i < fe::kFftSize; ++i) frame[i] = buffer_[i] * w[i];
        auto bins = fft::rfft(frame);
        Tensor lp(1, 1, fe::kBins);
        for (int k = 0; k < fe::kBins; ++k)
            lp.at(0, 0, k) = std::log(std::norm(bins[k]) + fe::kLogEps);
        Tensor mask = model_.forward_frame(lp, *state_);
        std::vector<fe::cplx> masked(fe::kBins);
        for (int k = 0; k < fe::kBins; ++k) masked[k] = bins[k] * mask.at(0, 0, k);
        auto chunk = synth_.push(masked.data());
        out.insert(out.end(), chunk.begin(), chunk.end());
        emitted_ += chunk.size();
        ++frames_done_;
        buffer_.erase(buffer_.begin(), buffer_.begin() + fe::kHop);
    }
    return out;
}

std::vector<double> Model::Stream::finish(size_t target_len) {
    // process exactly the frames the batch path would: cover max(len, 512)
    // rounded up to the hop grid
    const size_t eff = std::max(target_len, size_t(fe::kFftSize));
    const size_t frames = 1 + (eff - fe::kFftSize + fe::kHop - 1) / fe::kHop;
    std::vector<double> out;
    std::vector<double> zeros(fe::kHop, 0.0);
    while (frames_done_ < frames) {
        auto chunk = push(zeros.data());
        out.insert(out.end(), chunk.begin(), chunk.end());
    }
    auto tail = synth_.finish();
    out.insert(out.end(), tail.begin(), tail.end());
    emitted_ += tail.size();
    return out;
}

std::vector<double> Model::stream_enhance(const std::vector<double>& noisy) const {
    Stream s(*this);
    std::vector<double> out;
    std::vector<double> hop(fe::kHop, 0.0);
    size_t pos = 0;
    while (pos < noisy.size()) {
        const size_t n = std::min(size_t(fe::kHop), noisy.size() - pos);
        std::fill(hop.begin(), hop.end(), 0.0);
        std::copy(noisy.begin() + pos, noisy.begin() + pos + n, hop.begin());
        auto chunk = s.push(hop.data());
        out.insert(out.end(), chunk.begin(), chunk.end());
        pos += fe::kHop;
    }
    auto rest = s.finish(noisy.size());
    out.insert(out.end(), rest.begin(), rest.end());
    out.resize(noisy.size());
    return out;
}

void Model::params(ParamRefs& out) {
    for (auto& b : encoder_) b->params(out);
    bottleneck_.params(out);
    for (auto& b : decoder_) b->params(out);
    mask_conv_.params(out);
}

void Model::batchnorms(std::vector<BatchNorm2d*>& out) {
    for (auto& b : encoder_) b->batchnorms(out);
    for (auto& b : decoder_) b->batchnorms(out);
}

int64_t Model::param_count() const {
    int64_t total = 0;
    for (const auto& e : report()) total += e.params;
    return total;
}

void Model::zero_grads() {
    ParamRefs refs;
    params(refs);
    for (auto& r : refs) std::fill(r.p->g.begin(), r.p->g.end(), 0.0);
}

std::vector<LayerReport> Model::report() const {
    std::vector<LayerReport> out;
    out.push_back({"band_merge", 0, double(fe::kErbBands) * fe::kBins});
    for (const auto& b : encoder_) b->report(out);
    bottleneck_.report(out, "bottleneck");
    for (const auto& b : decoder_) b->report(out);
    out.push_back({"mask.conv", mask_conv_.param_count(), mask_conv_.macs_per_frame()});
    out.push_back({"band_split", 0, double(fe::kBins) * fe::kErbBands});
    return out;
}

void Model::merge_rep_blocks() {
    auto merge_list = [](std::vector<std::unique_ptr<Block>>& blocks, const char* prefix) {
        for (size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i]->spec().type == BlockType::Rep)
                blocks[i] = blocks[i]->merged(prefix + std::to_string(i + 1));
    };
    merge_list(encoder_, "enc");
    merge_list(decoder_, "dec");
    for (size_t i = 0; i < encoder_.size(); ++i)
        if (spec_.encoder_blocks[i].type == BlockType::Rep)
            spec_.encoder_blocks[i].type = BlockType::DWS;
}

// --------------------------------------------------------------- checkpoints

namespace {
constexpr char kMagic[8] = {'U', 'L', 'S', 'E', 'C', 'K', 'P', '1'};
}

void Model::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    json meta;
    meta["version"] = 1;
    meta["spec"] = json::parse(spec_.to_json());
    meta["seed"] = seed_;
    const std::string header = meta.dump();

    f.write(kMagic, 8);
    uint64_t hlen = header.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(header.data(), std::streamsize(header.size()));

    ParamRefs refs;
    const_cast<Model*>(this)->params(refs);
    uint64_t count = 0;
    for (const auto& r : refs) count += r.p->w.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& r : refs)
        f.write(reinterpret_cast<const char*>(r.p->w.data()),
                std::streamsize(r.p->w.size() * sizeof(double)));
    // running statistics travel with the weights
    std::vector<BatchNorm2d*> bns;
    const_cast<Model*>(this)->batchnorms(bns);
    for (const auto* bn : bns) {
        f.write(reinterpret_cast<const char*>(bn->running_mean.data()),
                std::streamsize(bn->running_mean.size() * 8));
        f.write(reinterpret_cast<const char*>(bn->running_var.data()),
                std::streamsize(bn->running_var.size() * 8));
    }
}

Model Model::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (f.gcount() != 8 || std::memcmp(magic, kMagic, 8))
        throw CheckpointError("not a checkpoint file: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string header(hlen, '\0');
    f.read(header.data(), std::streamsize(hlen));
    json meta;
    try {
        meta = json::parse(header);
    } catch (const json::exception&) {
        throw CheckpointError("corrupt checkpoint header: " + path);
    }
    ArchitectureSpec spec = ArchitectureSpec::from_json(meta["spec"].dump());
    Model m = assemble(spec, meta.value("seed", uint64_t(0)), false);

    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    ParamRefs refs;
    m.params(refs);
    uint64_t expect = 0;
    for (const auto& r : refs) expect += r.p->w.size();
    if (count != expect)
        throw CheckpointError("checkpoint does not match architecture (parameter count " +
                              std::to_string(count) + " vs " + std::to_string(expect) + ")");
    for (auto& r : refs)
        f.read(reinterpret_cast<char*>(r.p->w.data()),
               std::streamsize(r.p->w.size() * sizeof(double)));
    std::vector<BatchNorm2d*> bns;
    m.batchnorms(bns);
    for (auto* bn : bns) {
        f.read(reinterpret_cast<char*>(bn->running_mean.data()),
               std::streamsize(bn->running_mean.size() * 8));
        f.read(reinterpret_cast<char*>(bn->running_var.data()),
               std::streamsize(bn->running_var.size() * 8));
    }
    if (!f) throw CheckpointError("checkpoint truncated: " + path);
    return m;
}

} // namespace ulse::nn
