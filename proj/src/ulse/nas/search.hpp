#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ulse/mixer.hpp"
#include "ulse/nas/controller.hpp"
#include "ulse/nas/space.hpp"
#include "ulse/optim.hpp"

namespace ulse::nas {

struct RewardConfig {
    double q0 = 1.0;
    double target_macs = 30e6; // MACS/s
    double omega_plus = -0.15;
    double omega_minus = 0.0;
};

// (Q - Q0) * (M / M_T)^omega with omega chosen by which side of the target
// the candidate lands on.
double reward(double q, double macs, const RewardConfig& cfg);

struct PpoConfig {
    double clip = 0.2;
    int epochs = 4;
    double baseline_decay = 0.9;
    double lr = 1e-3;
    int stall_patience = 5;   // episodes without a better best reward
    double stall_factor = 0.5;
};

struct EvalConfig {
    enum class Kind { Toy, Trained };
    Kind kind = Kind::Toy;
    uint64_t seed = 1;
    uint64_t toy_seed = 7;
    // short-budget training evaluator
    int steps = 300;
    int batch = 2;
    int epochs = 6; // validation averaged over the final three
    train::SyntheticConfig data{16, 1.0, 0.0, 10.0, 1};
    int val_pairs = 4;
    double lr_peak = 1e-3;
    int warmup_steps = 10;
};

struct Evaluation {
    double q = 1.0;
    double macs = 0.0;
    bool buildable = true;
};

using QualityFn = std::function<double(const std::vector<int>&)>;

// Deterministic synthetic quality landscape for search verification.
QualityFn toy_quality(const SearchSpace& space, uint64_t seed);

Evaluation evaluate_candidate(const SearchSpace& space, const std::vector<int>& actions,
                              const EvalConfig& cfg);

struct SearchConfig {
    SearchSpace space;
    RewardConfig reward;
    PpoConfig ppo;
    EvalConfig eval;
    int episodes = 50;
    int batch = 8;
    int workers = 1;
    int top_keep = 10;
    uint64_t seed = 1;
    std::string trend_path;   // TSV, one row per episode
    std::string ranked_path;  // JSON list of architecture configs

    static SearchConfig load(const std::string& path);
};

struct TrendRow {
    int episode = 0;
    int64_t sampled = 0;
    int64_t distinct = 0; // distinct candidates tracked so far
    double top1 = 0, top5 = 0, top25 = 0;
    double episode_mean = 0, episode_best = 0;
    double lr = 0;
};

struct RankedEntry {
    std::vector<int> actions;
    double reward_value = 0, q = 0, macs = 0;
};

struct SearchResult {
    std::vector<RankedEntry> ranked; // best first
    std::vector<TrendRow> trend;
    int warnings = 0; // skipped updates (non-finite gradients)
};

SearchResult search(const SearchConfig& cfg);

// PPO policy update over one evaluated episode; exposed for unit tests.
// Returns false when the update was skipped because of non-finite gradients.
bool ppo_update(ControllerPolicy& policy, const std::vector<ControllerPolicy::Rollout>& episode,
                const std::vector<double>& advantages, const PpoConfig& cfg, train::Adam& opt,
                double lr);

struct BruteForceResult {
    std::vector<int> best_actions;
    double best_reward = 0, q = 0, macs = 0;
    uint64_t visited = 0;
};

// Exhaustive enumeration; refuses spaces above the configuration limit. Ties
// break toward lower MACS, then lexicographically smaller action sequences.
BruteForceResult brute_force(const SearchSpace& space, const QualityFn& quality,
                             const RewardConfig& cfg, uint64_t max_configs = 1000000);

void write_trend(const std::string& path, const std::vector<TrendRow>& rows);
void write_ranked(const std::string& path, const SearchSpace& space,
                  const std::vector<RankedEntry>& entries);

} // namespace ulse::nas
