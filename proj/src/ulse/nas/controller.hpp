#pragma once

#include <vector>

#include "ulse/layers.hpp"
#include "ulse/nas/space.hpp"

namespace ulse::nas {

// Autoregressive controller: one cell per searchable node, each cell being an
// embedding of the previous action, an LSTM cell carrying (h, c) across
// cells, and a softmax sampling head sized to the node's option count.
class ControllerPolicy {
public:
    static constexpr int kEmbed = 100;
    static constexpr int kHidden = 200;

    ControllerPolicy() = default;
    ControllerPolicy(const SearchSpace& space, uint64_t seed);

    struct Trace {
        std::vector<int> actions;
        // per-cell caches for backprop
        std::vector<std::vector<double>> x, h_prev, c_prev, gi, gf, gg, go, c, tanh_c, probs;
    };

    struct Rollout {
        std::vector<int> actions;
        double logp = 0.0;
        Trace trace;
    };

    Rollout sample(Rng& rng);
    Rollout evaluate(const std::vector<int>& actions);
    double sequence_logp(const std::vector<int>& actions);

    // accumulates gradients of coeff * log p(actions) into the parameters
    void backward(const Trace& trace, double coeff);

    void params(nn::ParamRefs& out);
    void zero_grads();
    int cells() const { return int(heads_w_.size()); }
    const SearchSpace& space() const { return space_; }

private:
    SearchSpace space_;
    // per cell
    std::vector<nn::Param> embed_;            // [n_prev x kEmbed]
    std::vector<nn::Param> w_ih_, w_hh_, b_;  // LSTM, gate order i,f,g,o
    std::vector<nn::Param> heads_w_, heads_b_;

    Rollout run(const std::vector<int>* forced, Rng* rng);
};

} // namespace ulse::nas
