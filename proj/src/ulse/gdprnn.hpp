#pragma once

#include <memory>
#include <vector>

#include "ulse/blocks.hpp"
#include "ulse/layers.hpp"

namespace ulse::nn {

// Grouped dual-path RNN bottleneck. The intra path runs a grouped
// bidirectional GRU across frequency within each frame; the inter path runs
// strictly causal per-frequency grouped GRUs across time (each frequency bin
// owns its weights). Both paths project back to the channel count, apply
// LayerNorm over (F, C) and add a residual, with a channel shuffle between
// the paths.
struct GDPRNNConfig {
    int groups = 2;
    int intra_hidden = 0; // per group per direction; 0 = 13C/16
    int inter_hidden = 0; // per group; 0 = C/2

    static GDPRNNConfig defaults(int channels);
};

class GDPRNN {
public:
    GDPRNN() = default;
    GDPRNN(int channels, int freq, const GDPRNNConfig& cfg, const std::string& name, Rng& rng);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);

    StatePtr make_state() const;
    Tensor step(const Tensor& x_frame, StreamState& state) const;

    void params(ParamRefs& out);
    void report(std::vector<LayerReport>& out, const std::string& prefix) const;

    const GDPRNNConfig& config() const { return cfg_; }
    int channels() const { return channels_; }
    int freq() const { return freq_; }

private:
    int channels_ = 0, freq_ = 0;
    GDPRNNConfig cfg_;
    int group_ch_ = 0;

    std::vector<GRU> intra_fw_, intra_bw_; // one per group
    Linear intra_fc_;
    LayerNormCF intra_ln_;
    std::vector<GRU> inter_; // freq * groups instances
    Linear inter_fc_;
    LayerNormCF inter_ln_;

    Tensor c_x_, c_z_; // cached path inputs for the residual adds

    std::vector<double> pack_group(const Tensor& x, int g, bool by_frame) const;
};

} // namespace ulse::nn
