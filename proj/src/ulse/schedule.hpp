#pragma once

#include <string>

namespace ulse::train {

enum class ScheduleKind { WarmupCosine, PlateauHalving };

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::WarmupCosine;
    int warmup_steps = 25000;
    int total_steps = 250000;
    double lr_start = 1e-6;
    double lr_peak = 1e-3;
    int plateau_patience = 5; // epochs without improvement
    double plateau_factor = 0.5;

    void validate() const;
};

// Linear warmup from lr_start to lr_peak, then cosine decay to zero.
double lr_at(int step, const ScheduleConfig& cfg);

// Epoch-driven halving when the validation loss stalls.
class PlateauScheduler {
public:
    explicit PlateauScheduler(const ScheduleConfig& cfg) : cfg_(cfg), lr_(cfg.lr_peak) {}

    // call once per epoch with the validation loss; returns the lr to use next
    double observe(double val_loss);
    double lr() const { return lr_; }

private:
    ScheduleConfig cfg_;
    double lr_;
    double best_ = 1e300;
    int stall_ = 0;
};

ScheduleKind schedule_kind_from_name(const std::string& s);

} // namespace ulse::train
