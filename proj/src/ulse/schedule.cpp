#include "ulse/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace ulse::train {

void ScheduleConfig::validate() const {
    if (warmup_steps >= total_steps)
        throw std::invalid_argument("schedule: warmup_steps must be < total_steps");
    if (lr_start <= 0 || lr_peak <= 0) throw std::invalid_argument("schedule: rates must be > 0");
}

double lr_at(int step, const ScheduleConfig& cfg) {
    if (step < 0) throw std::invalid_argument("schedule: negative step");
    if (step <= cfg.warmup_steps)
        return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * double(step) / cfg.warmup_steps;
    if (step >= cfg.total_steps) return 0.0;
    const double progress =
        double(step - cfg.warmup_steps) / double(cfg.total_steps - cfg.warmup_steps);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double PlateauScheduler::observe(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        stall_ = 0;
    } else if (++stall_ >= cfg_.plateau_patience) {
        lr_ *= cfg_.plateau_factor;
        stall_ = 0;
    }
    return lr_;
}

ScheduleKind schedule_kind_from_name(const std::string& s) {
    if (s == "warmup_cosine") return ScheduleKind::WarmupCosine;
    if (s == "plateau_halving") return ScheduleKind::PlateauHalving;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

} // namespace ulse::train
