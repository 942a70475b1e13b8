#include "ulse/nas/search.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "ulse/complexity.hpp"
#include "ulse/schedule.hpp"
#include "ulse/trainer.hpp"

namespace ulse::nas {

using json = nlohmann::json;

double reward(double q, double macs, const RewardConfig& cfg) {
    if (macs <= 0.0) throw std::invalid_argument("reward: macs must be positive");
    const double omega = macs > cfg.target_macs ? cfg.omega_plus : cfg.omega_minus;
    return (q - cfg.q0) * std::pow(macs / cfg.target_macs, omega);
}

QualityFn toy_quality(const SearchSpace& space, uint64_t seed) {
    // fixed per-node score tables; the sum maps into roughly [1, 3]
    std::vector<std::vector<double>> table(space.nodes());
    Rng rng(seed ? seed : 1);
    for (int n = 0; n < space.nodes(); ++n) {
        table[n].resize(space.option_count(n));
        for (auto& v : table[n]) v = rng.uniform(0.0, 2.0 / space.nodes());
    }
    return [table](const std::vector<int>& actions) {
        double q = 1.0;
        for (size_t n = 0; n < actions.size(); ++n) q += table[n][actions[n]];
        return q;
    };
}

namespace {

uint64_t actions_key_seed(const std::vector<int>& actions, uint64_t seed) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
    for (int a : actions) h = Rng::mix(h, uint64_t(a) + 1);
    return h;
}

// Short-budget training evaluator: the quality score is one plus the
// held-out SISNR gain mapped to about [1, 3], averaged over validations run
// after each of the final three epochs.
Evaluation trained_quality(const nn::ArchitectureSpec& spec, const std::vector<int>& actions,
                           const EvalConfig& cfg, double macs) {
    const uint64_t cand_seed = actions_key_seed(actions, cfg.seed);
    nn::Model model = nn::Model::assemble(spec, cand_seed, false);

    // every candidate trains and validates on the same clips so that the
    // quality scores stay comparable across architectures
    train::SyntheticConfig dc = cfg.data;
    dc.seed = Rng::mix(cfg.seed, 0xdada);
    auto train_set = train::synthetic_set(dc);
    dc.pairs = cfg.val_pairs;
    dc.seed = Rng::mix(cfg.seed, 0xva1);
    auto val_set = train::synthetic_set(dc);

    nn::ParamRefs refs;
    model.params(refs);
    train::Adam opt(refs);
    train::LossWeights w;
    Rng order(Rng::mix(cfg.seed, 0x0d8e));

    const int epochs = std::max(3, cfg.epochs);
    const int steps_per_epoch = std::max(1, cfg.steps / epochs);
    double base_db = 0.0;
    for (const auto& p : val_set) base_db += train::sisnr_db(p.noisy, p.clean);
    base_db /= double(val_set.size());

    double gain_sum = 0.0;
    int gain_count = 0;
    int step = 0;
    for (int e = 0; e < epochs; ++e) {
        for (int s = 0; s < steps_per_epoch; ++s, ++step) {
            const double lr = step < cfg.warmup_steps
                                  ? cfg.lr_peak * double(step + 1) / cfg.warmup_steps
                                  : cfg.lr_peak;
            model.zero_grads();
            double loss = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                const auto& pair = train_set[order.uniform_int(int(train_set.size()))];
                loss += train::train_step_loss(model, pair, w, 1.0 / cfg.batch);
            }
            if (!std::isfinite(loss)) return {1.0, macs, true};
            opt.step(refs, lr);
        }
        if (e >= epochs - 3) {
            double db = 0.0;
            for (const auto& p : val_set) {
                auto est = model.enhance(p.noisy);
                db += train::sisnr_db(est, p.clean);
            }
            gain_sum += db / double(val_set.size()) - base_db;
            ++gain_count;
        }
    }
    // held-out gain mapped into roughly [1, 3]; 10 dB of improvement
    // saturates the score, and mild degradation is allowed to dip below the
    // baseline so the reward stays informative early in training
    const double gain = gain_sum / std::max(1, gain_count);
    Evaluation ev;
    ev.q = 1.0 + std::min(2.0, std::max(-0.5, gain / 5.0));
    ev.macs = macs;
    return ev;
}

} // namespace

Evaluation evaluate_candidate(const SearchSpace& space, const std::vector<int>& actions,
                              const EvalConfig& cfg) {
    Evaluation ev;
    nn::ArchitectureSpec spec;
    double macs = 0.0;
    try {
        spec = space.decode(actions);
        auto model = nn::Model::assemble(spec, 1, false);
        macs = complexity::count_macs(model);
    } catch (const std::invalid_argument&) {
        ev.buildable = false;
        ev.q = 1.0; // reward floor
        ev.macs = 1.0;
        return ev;
    }
    if (cfg.kind == EvalConfig::Kind::Toy) {
        ev.q = toy_quality(space, cfg.toy_seed)(actions);
        ev.macs = macs;
        return ev;
    }
    return trained_quality(spec, actions, cfg, macs);
}

bool ppo_update(ControllerPolicy& policy, const std::vector<ControllerPolicy::Rollout>& episode,
                const std::vector<double>& advantages, const PpoConfig& cfg, train::Adam& opt,
                double lr) {
    nn::ParamRefs refs;
    policy.params(refs);

    bool all_zero = true;
    for (double a : advantages)
        if (a != 0.0) all_zero = false;
    if (all_zero) return true; // nothing to do, parameters unchanged

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        policy.zero_grads();
        const double inv_b = 1.0 / double(episode.size());
        for (size_t j = 0; j < episode.size(); ++j) {
            auto ev = policy.evaluate(episode[j].actions);
            const double ratio = std::exp(ev.logp - episode[j].logp);
            const double a = advantages[j];
            const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            // loss = -(1/B) sum min(ratio*A, clipped*A); the clipped branch
            // carries no gradient
            if (ratio * a <= clipped * a + 1e-18)
                policy.backward(ev.trace, -inv_b * a * ratio);
        }
        bool finite = true;
        for (auto& r : refs)
            for (double g : r.p->g)
                if (!std::isfinite(g)) finite = false;
        if (!finite) {
            std::fprintf(stderr, "warning: skipping ppo update (non-finite gradients)\n");
            return false;
        }
        opt.step(refs, lr);
    }
    return true;
}

SearchConfig SearchConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open search config: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("search config is not valid JSON: ") + e.what());
    }
    SearchConfig cfg;
    if (j.contains("space")) cfg.space = SearchSpace::from_json(j["space"].dump());
    if (j.contains("reward")) {
        const auto& r = j["reward"];
        cfg.reward.q0 = r.value("q0", cfg.reward.q0);
        cfg.reward.target_macs = r.value("target_macs", cfg.reward.target_macs);
        cfg.reward.omega_plus = r.value("omega_plus", cfg.reward.omega_plus);
        cfg.reward.omega_minus = r.value("omega_minus", cfg.reward.omega_minus);
    }
    if (j.contains("ppo")) {
        const auto& p = j["ppo"];
        cfg.ppo.clip = p.value("clip", cfg.ppo.clip);
        cfg.ppo.epochs = p.value("epochs", cfg.ppo.epochs);
        cfg.ppo.baseline_decay = p.value("baseline_decay", cfg.ppo.baseline_decay);
        cfg.ppo.lr = p.value("lr", cfg.ppo.lr);
        cfg.ppo.stall_patience = p.value("stall_patience", cfg.ppo.stall_patience);
    }
    const std::string kind = j.value("evaluator", std::string("toy"));
    if (kind == "toy")
        cfg.eval.kind = EvalConfig::Kind::Toy;
    else if (kind == "trained")
        cfg.eval.kind = EvalConfig::Kind::Trained;
    else
        throw std::invalid_argument("unknown evaluator: " + kind);
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        cfg.eval.toy_seed = e.value("toy_seed", cfg.eval.toy_seed);
        cfg.eval.steps = e.value("steps", cfg.eval.steps);
        cfg.eval.batch = e.value("batch", cfg.eval.batch);
        cfg.eval.epochs = e.value("epochs", cfg.eval.epochs);
        cfg.eval.val_pairs = e.value("val_pairs", cfg.eval.val_pairs);
        cfg.eval.lr_peak = e.value("lr_peak", cfg.eval.lr_peak);
        if (e.contains("data")) {
            const auto& d = e["data"];
            cfg.eval.data.pairs = d.value("pairs", cfg.eval.data.pairs);
            cfg.eval.data.seconds = d.value("seconds", cfg.eval.data.seconds);
            cfg.eval.data.snr_lo = d.value("snr_lo", cfg.eval.data.snr_lo);
            cfg.eval.data.snr_hi = d.value("snr_hi", cfg.eval.data.snr_hi);
        }
    }
    cfg.episodes = j.value("episodes", cfg.episodes);
    cfg.batch = j.value("batch", cfg.batch);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.top_keep = j.value("top_keep", cfg.top_keep);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.trend_path = j.value("trend", std::string());
    cfg.ranked_path = j.value("ranked", std::string());
    return cfg;
}

namespace {

struct TopTracker {
    // best rewards seen so far, unique by action sequence, capped at 25
    std::vector<RankedEntry> entries;

    void offer(const RankedEntry& e) {
        for (auto& have : entries)
            if (have.actions == e.actions) {
                if (e.reward_value > have.reward_value) have = e;
                sort_entries();
                return;
            }
        entries.push_back(e);
        sort_entries();
        if (entries.size() > 25) entries.resize(25);
    }

    void sort_entries() {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.reward_value != b.reward_value) return a.reward_value > b.reward_value;
            if (a.macs != b.macs) return a.macs < b.macs;
            return a.actions < b.actions;
        });
    }

    // k-th best reward so far (the worst kept entry while fewer than k
    // distinct candidates have been seen); an order statistic of a growing
    // set, hence nondecreasing once k candidates exist
    double kth_best(size_t k) const {
        if (entries.empty()) return 0.0;
        const size_t n = std::min(k, entries.size());
        return entries[n - 1].reward_value;
    }
};

} // namespace

SearchResult search(const SearchConfig& cfg) {
    if (cfg.batch < 1 || cfg.episodes < 1)
        throw std::invalid_argument("search: batch and episodes must be >= 1");
    ControllerPolicy policy(cfg.space, cfg.seed);
    nn::ParamRefs refs;
    policy.params(refs);
    train::Adam opt(refs);
    Rng rng(cfg.seed);

    std::map<std::vector<int>, Evaluation> cache;
    std::mutex cache_mu;

    SearchResult result;
    TopTracker top;
    double baseline = 0.0;
    bool baseline_set = false;
    double best_reward = -1e300;
    int stall = 0;
    double lr = cfg.ppo.lr;
    int64_t sampled = 0;

    for (int ep = 0; ep < cfg.episodes; ++ep) {
        std::vector<ControllerPolicy::Rollout> rollouts;
        rollouts.reserve(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) rollouts.push_back(policy.sample(rng));
        sampled += cfg.batch;

        // evaluate candidates on the worker pool; results keyed by slot so
        // scheduling order cannot matter
        std::vector<Evaluation> evals(cfg.batch);
        {
            std::atomic<int> next{0};
            auto work = [&] {
                kernels::SerialGuard serial; // avoid nested parallelism
                for (;;) {
                    const int idx = next.fetch_add(1);
                    if (idx >= cfg.batch) break;
                    const auto& actions = rollouts[idx].actions;
                    {
                        std::lock_guard<std::mutex> lock(cache_mu);
                        auto it = cache.find(actions);
                        if (it != cache.end()) {
                            evals[idx] = it->second;
                            continue;
                        }
                    }
                    Evaluation ev = evaluate_candidate(cfg.space, actions, cfg.eval);
                    {
                        std::lock_guard<std::mutex> lock(cache_mu);
                        cache.emplace(actions, ev);
                    }
                    evals[idx] = ev;
                }
            };
            const int workers = std::max(1, cfg.workers);
            if (workers == 1) {
                work();
            } else {
                std::vector<std::thread> pool;
                for (int w = 0; w < workers; ++w) pool.emplace_back(work);
                for (auto& t : pool) t.join();
            }
        }

        std::vector<double> rewards(cfg.batch);
        double ep_mean = 0.0, ep_best = -1e300;
        for (int b = 0; b < cfg.batch; ++b) {
            rewards[b] = reward(evals[b].q, evals[b].macs, cfg.reward);
            ep_mean += rewards[b];
            ep_best = std::max(ep_best, rewards[b]);
            top.offer({rollouts[b].actions, rewards[b], evals[b].q, evals[b].macs});
        }
        ep_mean /= cfg.batch;

        if (!baseline_set) {
            baseline = ep_mean;
            baseline_set = true;
        }
        std::vector<double> advantages(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) advantages[b] = rewards[b] - baseline;
        baseline = cfg.ppo.baseline_decay * baseline + (1.0 - cfg.ppo.baseline_decay) * ep_mean;

        if (!ppo_update(policy, rollouts, advantages, cfg.ppo, opt, lr)) ++result.warnings;

        if (ep_best > best_reward + 1e-12) {
            best_reward = ep_best;
            stall = 0;
        } else if (++stall >= cfg.ppo.stall_patience) {
            lr *= cfg.ppo.stall_factor;
            stall = 0;
        }

        TrendRow row;
        row.episode = ep + 1;
        row.sampled = sampled;
        row.top1 = top.kth_best(1);
        row.top5 = top.kth_best(5);
        row.top25 = top.kth_best(25);
        row.distinct = int64_t(top.entries.size());
        row.episode_mean = ep_mean;
        row.episode_best = ep_best;
        row.lr = lr;
        result.trend.push_back(row);
    }

    result.ranked.assign(top.entries.begin(),
                         top.entries.begin() + std::min<size_t>(cfg.top_keep, top.entries.size()));
    if (!cfg.trend_path.empty()) write_trend(cfg.trend_path, result.trend);
    if (!cfg.ranked_path.empty()) write_ranked(cfg.ranked_path, cfg.space, result.ranked);
    return result;
}

BruteForceResult brute_force(const SearchSpace& space, const QualityFn& quality,
                             const RewardConfig& cfg, uint64_t max_configs) {
    const uint64_t total = space.total_configs();
    if (total > max_configs)
        throw std::invalid_argument("brute force refused: space has " + std::to_string(total) +
                                    " configurations (limit " + std::to_string(max_configs) + ")");
    BruteForceResult best;
    bool have = false;
    std::vector<int> actions(space.nodes(), 0);
    for (;;) {
        ++best.visited;
        double macs = 0.0;
        bool buildable = true;
        try {
            auto model = nn::Model::assemble(space.decode(actions), 1, false);
            macs = complexity::count_macs(model);
        } catch (const std::invalid_argument&) {
            buildable = false;
        }
        if (buildable) {
            const double q = quality(actions);
            const double r = reward(q, macs, cfg);
            const bool better =
                !have || r > best.best_reward ||
                (r == best.best_reward &&
                 (macs < best.macs || (macs == best.macs && actions < best.best_actions)));
            if (better) {
                best.best_actions = actions;
                best.best_reward = r;
                best.q = q;
                best.macs = macs;
                have = true;
            }
        }
        // odometer increment
        int n = space.nodes() - 1;
        while (n >= 0) {
            if (++actions[n] < space.option_count(n)) break;
            actions[n] = 0;
            --n;
        }
        if (n < 0) break;
    }
    if (!have) throw std::runtime_error("brute force: no buildable configuration");
    return best;
}

void write_trend(const std::string& path, const std::vector<TrendRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write trend file: " + path);
    f << "episode\tsampled\tdistinct\ttop1\ttop5\ttop25\tepisode_mean\tepisode_best\tlr\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d\t%lld\t%lld\t%.8f\t%.8f\t%.8f\t%.8f\t%.8f\t%.3g\n",
                      r.episode, (long long)r.sampled, (long long)r.distinct, r.top1, r.top5,
                      r.top25, r.episode_mean, r.episode_best, r.lr);
        f << buf;
    }
}

void write_ranked(const std::string& path, const SearchSpace& space,
                  const std::vector<RankedEntry>& entries) {
    json j = json::array();
    int rank = 1;
    for (const auto& e : entries) {
        json item;
        item["rank"] = rank++;
        item["reward"] = e.reward_value;
        item["quality"] = e.q;
        item["macs_per_second"] = e.macs;
        item["actions"] = e.actions;
        item["config"] = json::parse(space.decode(e.actions).to_json());
        j.push_back(item);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write ranked file: " + path);
    f << j.dump(2) << "\n";
}

} // namespace ulse::nas
