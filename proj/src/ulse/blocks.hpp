#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ulse/layers.hpp"

namespace ulse::nn {

enum class BlockType { Conv, DWS, Ghost, Rep, MB, Star, XConv, XDWS, XMB };

const char* block_type_name(BlockType t);
BlockType block_type_from_name(const std::string& s);
bool block_type_extended(BlockType t); // X variants: APReLU activations + cTFA

struct BlockSpec {
    BlockType type = BlockType::Conv;
    int stride = 1;              // frequency-axis stride
    int groups = 1;
    int out_channels = 16;
    int kernel_t = 3, kernel_f = 3;
    bool transposed = false;

    void validate() const;
};

struct LayerReport {
    std::string name;
    int64_t params = 0;
    double macs_per_frame = 0.0;
};

// Causal time-frequency attention: a frequency-independent branch (GRU over
// frequency-pooled energies) times a frequency-dependent branch (stacked
// (3,1) convs over channel-pooled energies), both gated by a logistic.
class CTFA {
public:
    static constexpr int kExpansion = 5;

    CTFA() = default;
    CTFA(int channels, int freq, const std::string& name, Rng& rng);

    Tensor forward(const Tensor& v, bool train);
    Tensor backward(const Tensor& gy);

    StatePtr make_state() const;
    Tensor step(const Tensor& v, StreamState& state) const;

    void params(ParamRefs& out);
    void report(std::vector<LayerReport>& out, const std::string& prefix) const;

    GRU fita_gru;
    Linear fita_fc;
    Conv2d fdta_conv1, fdta_conv2;
    PReLU fdta_act;

private:
    int channels_ = 0, freq_ = 0;
    Tensor c_v_, c_at_, c_af_; // cached input and attention maps
};

// A forward/backward-capable encoder or decoder block.
class Block {
public:
    virtual ~Block() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& gy) = 0;
    virtual StatePtr make_state() const = 0;
    virtual Tensor step(const Tensor& x, StreamState& state) const = 0;
    virtual void params(ParamRefs& out) = 0;
    virtual void batchnorms(std::vector<BatchNorm2d*>& out) = 0;
    virtual void report(std::vector<LayerReport>& out) const = 0;

    // Rep blocks fold their parallel branches into single convolutions and
    // return the inference-form block; other types reject the call.
    virtual std::unique_ptr<Block> merged(const std::string& name) const;

    const BlockSpec& spec() const { return spec_; }
    int c_in() const { return c_in_; }
    int c_out() const { return spec_.out_channels; }
    int f_in() const { return f_in_; }
    int f_out() const { return f_out_; }

protected:
    BlockSpec spec_;
    int c_in_ = 0, f_in_ = 0, f_out_ = 0;
    std::string name_;
};

// Builds one block. For transposed specs f_target names the mirrored output
// width; for standard specs it is ignored and derived from the stride.
std::unique_ptr<Block> build_block(const BlockSpec& spec, int in_channels, int f_in,
                                   const std::string& name, Rng& rng, int f_target = -1);

// MB/Star hidden widths. Decoder (transposed) blocks mirror the encoder, so
// their hidden width follows the input channel count instead.
int mb_hidden(int in_channels, int out_channels, bool transposed);
int star_hidden(int in_channels, int out_channels, bool transposed);
int ghost_primary(int out_channels);

} // namespace ulse::nn
