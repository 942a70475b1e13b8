#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ulse/kernels.hpp"
#include "ulse/tensor.hpp"

namespace ulse::nn {

struct Param {
    std::string name;
    std::vector<double> w, g;

    void resize(const std::string& n, size_t count) {
        name = n;
        w.assign(count, 0.0);
        g.assign(count, 0.0);
    }
    size_t size() const { return w.size(); }
};

struct ParamRef {
    Param* p;
};
using ParamRefs = std::vector<ParamRef>;

// Streaming state base. Each layer owning temporal context (conv history,
// recurrent hidden state) provides its own subclass; states are never shared
// across threads.
struct StreamState {
    virtual ~StreamState() = default;
};
using StatePtr = std::unique_ptr<StreamState>;

void init_uniform(std::vector<double>& w, double bound, Rng& rng);

// ---------------------------------------------------------------------------

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const kernels::ConvGeom& geom, const std::string& name, Rng& rng, bool with_bias = true);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);

    StatePtr make_state() const;
    Tensor step(const Tensor& x_frame, StreamState& state) const;

    void params(ParamRefs& out);
    int64_t param_count() const;
    double macs_per_frame() const;
    const kernels::ConvGeom& geom() const { return geom_; }

    Param weight, bias;

private:
    kernels::ConvGeom geom_;
    bool has_bias_ = true;
    Tensor cached_in_;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(int channels, const std::string& name);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);
    Tensor eval_only(const Tensor& x) const; // running-stats path (streaming)

    void params(ParamRefs& out);
    int64_t param_count() const { return 2 * channels_; }

    // Overwrites the affine + running stats so that eval output equals
    // x*scale + shift; used by branch merging and inference folding.
    void set_affine_passthrough(const std::vector<double>& scale,
                                const std::vector<double>& shift);
    // Effective y = a*x + b in eval mode.
    void effective(std::vector<double>& a, std::vector<double>& b) const;

    Param gamma, beta;
    std::vector<double> running_mean, running_var;
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    int channels_ = 0;
    Tensor cached_xhat_;
    std::vector<double> cached_inv_std_;
};

class PReLU {
public:
    PReLU() = default;
    PReLU(int channels, const std::string& name, double init = 0.25);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);
    Tensor eval_only(const Tensor& x) const;

    void params(ParamRefs& out);
    int64_t param_count() const { return channels_; }

    Param alpha;

private:
    int channels_ = 0;
    Tensor cached_in_;
};

// gamma*x + beta + PReLU(x) with frequency-dependent affine terms. gamma and
// beta are [C x F]; alpha is per channel.
class APReLU {
public:
    APReLU() = default;
    APReLU(int channels, int freq, const std::string& name);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);
    Tensor eval_only(const Tensor& x) const;

    void params(ParamRefs& out);
    int64_t param_count() const { return 2 * channels_ * freq_ + channels_; }

    Param gamma, beta, alpha;

private:
    int channels_ = 0, freq_ = 0;
    Tensor cached_in_;
};

// Dense layer applied row-wise to packed [rows x in] data.
class Linear {
public:
    Linear() = default;
    Linear(int in, int out, const std::string& name, Rng& rng);

    std::vector<double> forward(const std::vector<double>& x, int rows, bool train);
    std::vector<double> backward(const std::vector<double>& gy, int rows);
    std::vector<double> infer(const std::vector<double>& x, int rows) const;

    void params(ParamRefs& out);
    int64_t param_count() const { return int64_t(in_) * out_ + out_; }
    double macs() const { return double(in_) * out_; } // per application

    int in() const { return in_; }
    int out() const { return out_; }

    Param weight, bias;

private:
    int in_ = 0, out_ = 0;
    std::vector<double> cached_in_;
    int cached_rows_ = 0;
};

// LayerNorm over the (C, F) slice of each frame, affine [C x F].
class LayerNormCF {
public:
    LayerNormCF() = default;
    LayerNormCF(int channels, int freq, const std::string& name);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& gy);
    Tensor infer(const Tensor& x) const;

    void params(ParamRefs& out);
    int64_t param_count() const { return 2 * channels_ * freq_; }

    Param gamma, beta;
    static constexpr double kEps = 1e-8;

private:
    int channels_ = 0, freq_ = 0;
    Tensor cached_xhat_;
    std::vector<double> cached_inv_std_;
};

// Single-direction GRU over packed sequences: x is [seqs x steps x in],
// output [seqs x steps x hidden]. dual_bias selects the two-bias gate layout.
class GRU {
public:
    GRU() = default;
    GRU(int in, int hidden, const std::string& name, Rng& rng, bool dual_bias);

    std::vector<double> forward(const std::vector<double>& x, int seqs, int steps, bool train,
                                bool reverse = false);
    std::vector<double> infer(const std::vector<double>& x, int seqs, int steps,
                              bool reverse = false) const;
    // returns grad wrt x; accumulates parameter grads
    std::vector<double> backward(const std::vector<double>& gy);

    // streaming: one step for one sequence; h has size hidden
    void step(const double* x, std::vector<double>& h) const;

    void params(ParamRefs& out);
    int64_t param_count() const;
    double macs_per_step() const { return 3.0 * (double(in_) * hidden_ + double(hidden_) * hidden_); }

    int in() const { return in_; }
    int hidden() const { return hidden_; }

    Param w_ih, w_hh, b_ih, b_hh; // gate order: r, z, n

private:
    int in_ = 0, hidden_ = 0;
    bool dual_bias_ = true;
    bool reverse_ = false;
    int seqs_ = 0, steps_ = 0;
    std::vector<double> c_x_, c_h_, c_r_, c_z_, c_n_, c_m_; // per-step caches
};

// channel c = g*(C/G)+k moves to position k*G+g
Tensor channel_shuffle(const Tensor& x, int groups);
Tensor channel_unshuffle(const Tensor& x, int groups);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace ulse::nn
