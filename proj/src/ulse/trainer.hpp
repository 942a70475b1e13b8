#pragma once

#include <string>
#include <vector>

#include "ulse/losses.hpp"
#include "ulse/mixer.hpp"
#include "ulse/network.hpp"
#include "ulse/optim.hpp"
#include "ulse/schedule.hpp"

namespace ulse::train {

struct TrainConfig {
    nn::ArchitectureSpec arch;
    uint64_t seed = 1;
    int steps = 1000;
    int batch = 2;
    SyntheticConfig data;
    std::string manifest;  // overrides the synthetic set when non-empty
    int val_pairs = 6;
    int val_every = 200;
    ScheduleConfig schedule;
    LossWeights weights;
    std::string log_path;
    std::string checkpoint_path;

    static TrainConfig load(const std::string& path);
};

struct ValReport {
    double sisnr_noisy_db = 0.0;
    double sisnr_enhanced_db = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    nn::Model model;
    std::vector<double> loss_history; // one entry per optimizer step
    ValReport initial, final;
};

// One gradient step worth of loss/grad for a single pair; exposed for tests.
double train_step_loss(nn::Model& model, const Pair& pair, const LossWeights& w,
                       double grad_scale);

ValReport validate(nn::Model& model, const std::vector<Pair>& val, const LossWeights& w);

TrainResult train(const TrainConfig& cfg);

} // namespace ulse::train
