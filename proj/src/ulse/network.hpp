#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ulse/blocks.hpp"
#include "ulse/frontend.hpp"
#include "ulse/gdprnn.hpp"

namespace ulse::nn {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArchitectureSpec {
    std::vector<BlockSpec> encoder_blocks;
    int input_channels = 1;
    GDPRNNConfig bottleneck; // hidden sizes 0 = derive from channels

    static constexpr int kEncoderBlocks = 5;

    void validate(bool enforce_block_count = true) const;

    std::string to_json() const;
    static ArchitectureSpec from_json(const std::string& text);
    static ArchitectureSpec load(const std::string& path);
    void save(const std::string& path) const;

    // Table-style prototype: five identical blocks, 16 channels, kernel (3,3),
    // strides [2,2,1,1,1], single group.
    static ArchitectureSpec prototype(BlockType type, int channels = 16);
};

// Streaming state for a whole model; owns per-block states plus bottleneck
// and synthesis state. Never share one instance across threads.
struct ModelState;

// BM -> encoder -> G-DPRNN -> mirrored decoder with additive skips -> 1x1
// mask head with logistic gate -> BS.
class Model {
public:
    Model() = default;

    static Model assemble(const ArchitectureSpec& spec, uint64_t seed,
                          bool enforce_block_count = true);

    // [1 x T x 257] log-power in, [1 x T x 257] mask in (0,1) out.
    Tensor forward(const Tensor& noisy_logpower, bool train = false);
    // gradient wrt the mask; returns gradient wrt the log-power input
    Tensor backward(const Tensor& gmask);

    std::vector<double> enhance(const std::vector<double>& noisy) const;

    // incremental interface: push one 256-sample hop, receive enhanced hops
    class Stream {
    public:
        explicit Stream(const Model& m);
        std::vector<double> push(const double* hop);      // kHop samples in
        std::vector<double> finish(size_t target_len);    // flush + trim helper
        size_t pushed() const { return pushed_; }

    private:
        const Model& model_;
        std::unique_ptr<ModelState> state_;
        std::vector<double> buffer_;
        frontend::OlaSynth synth_;
        size_t pushed_ = 0, emitted_ = 0, hops_seen_ = 0, frames_done_ = 0;
    };

    std::vector<double> stream_enhance(const std::vector<double>& noisy) const;

    // one mask frame from one analysis frame (used by Stream)
    Tensor forward_frame(const Tensor& logpower_frame, ModelState& st) const;

    void params(ParamRefs& out);
    void batchnorms(std::vector<BatchNorm2d*>& out);
    int64_t param_count() const;
    void zero_grads();
    std::vector<LayerReport> report() const;

    // Folds Rep blocks into their single-branch inference form.
    void merge_rep_blocks();

    void save(const std::string& path) const;
    static Model load(const std::string& path);

    const ArchitectureSpec& spec() const { return spec_; }
    const std::vector<std::unique_ptr<Block>>& encoder() const { return encoder_; }
    const std::vector<std::unique_ptr<Block>>& decoder() const { return decoder_; }
    GDPRNN& bottleneck() { return bottleneck_; }

    std::unique_ptr<ModelState> make_state() const;

private:
    ArchitectureSpec spec_;
    uint64_t seed_ = 0;
    std::vector<std::unique_ptr<Block>> encoder_, decoder_;
    GDPRNN bottleneck_;
    Conv2d mask_conv_;
    // cached activations for backward
    std::vector<Tensor> enc_outs_;
    Tensor c_mask_pre_bs_;

    Tensor mask_head(const Tensor& x, bool train);
};

// Applies mask to spectrogram: |S| = M .* |X|, phase kept from X.
frontend::Spectrogram apply_mask(const frontend::Spectrogram& noisy, const Tensor& mask);

} // namespace ulse::nn
