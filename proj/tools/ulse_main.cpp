// Command-line front end: enhancement, training, architecture search,
// complexity audits and plot emission.
//
// Exit codes: 0 success, 2 input error, 3 checkpoint/config mismatch,
// 4 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "ulse/complexity.hpp"
#include "ulse/nas/search.hpp"
#include "ulse/network.hpp"
#include "ulse/plot.hpp"
#include "ulse/trainer.hpp"
#include "ulse/wav.hpp"

namespace {

constexpr uint64_t kDefaultSeed = 1;

// Relative paths may live under the directory named by ULSE_DATA_DIR.
std::string resolve_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::exists(path) || fs::path(path).is_absolute()) return path;
    const char* base = std::getenv("ULSE_DATA_DIR");
    if (!base) return path;
    fs::path joined = fs::path(base) / path;
    return fs::exists(joined) ? joined.string() : path;
}

int cmd_enhance(const std::string& in_path, const std::string& ckpt_path,
                const std::string& out_path, bool stream) {
    auto clip = ulse::wav::read(resolve_path(in_path));
    auto model = ulse::nn::Model::load(resolve_path(ckpt_path));
    auto out = stream ? model.stream_enhance(clip.samples) : model.enhance(clip.samples);
    ulse::wav::Clip enhanced{out, clip.sample_rate};
    ulse::wav::write(out_path, enhanced);
    std::printf("enhanced %zu samples (%s) -> %s\n", clip.samples.size(),
                stream ? "streaming" : "batch", out_path.c_str());
    return 0;
}

int cmd_complexity(const std::string& config_path, bool json_style) {
    auto spec = ulse::nn::ArchitectureSpec::load(resolve_path(config_path));
    auto model = ulse::nn::Model::assemble(spec, kDefaultSeed);
    auto rep = ulse::complexity::report(model);
    std::fputs((json_style ? ulse::complexity::format_json(rep)
                           : ulse::complexity::format_text(rep))
                   .c_str(),
               stdout);
    return 0;
}

int cmd_train(const std::string& config_path, uint64_t seed, const std::string& out_ckpt,
              const std::string& log_path) {
    auto cfg = ulse::train::TrainConfig::load(resolve_path(config_path));
    if (seed) cfg.seed = seed;
    if (!out_ckpt.empty()) cfg.checkpoint_path = out_ckpt;
    if (!log_path.empty()) cfg.log_path = log_path;
    if (!cfg.manifest.empty()) cfg.manifest = resolve_path(cfg.manifest);
    auto result = ulse::train::train(cfg);
    std::printf("trained %d steps: loss %.6f -> %.6f\n", int(result.loss_history.size()),
                result.loss_history.empty() ? 0.0 : result.loss_history.front(),
                result.loss_history.empty() ? 0.0 : result.loss_history.back());
    std::printf("val sisnr: noisy %.2f dB, enhanced %.2f dB (gain %.2f dB)\n",
                result.final.sisnr_noisy_db, result.final.sisnr_enhanced_db,
                result.final.sisnr_enhanced_db - result.final.sisnr_noisy_db);
    if (!cfg.checkpoint_path.empty())
        std::printf("checkpoint written to %s\n", cfg.checkpoint_path.c_str());
    return 0;
}

int cmd_search(const std::string& config_path, uint64_t seed, int workers,
               const std::string& out_dir) {
    auto cfg = ulse::nas::SearchConfig::load(resolve_path(config_path));
    if (seed) cfg.seed = seed;
    if (workers > 0) cfg.workers = workers;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        cfg.trend_path = (std::filesystem::path(out_dir) / "trend.tsv").string();
        cfg.ranked_path = (std::filesystem::path(out_dir) / "ranked.json").string();
    }
    auto result = ulse::nas::search(cfg);
    std::printf("search finished: %d episodes, %lld models sampled\n", int(result.trend.size()),
                result.trend.empty() ? 0ll : (long long)result.trend.back().sampled);
    if (!result.ranked.empty()) {
        const auto& best = result.ranked.front();
        std::printf("best reward %.6f (quality %.4f, %.2fM macs)\n", best.reward_value, best.q,
                    best.macs / 1e6);
    }
    if (!cfg.trend_path.empty()) {
        const auto svg = cfg.trend_path.substr(0, cfg.trend_path.rfind('.')) + ".svg";
        ulse::plot::plot_trend(cfg.trend_path, svg);
        std::printf("trend written to %s and %s\n", cfg.trend_path.c_str(), svg.c_str());
    }
    if (!cfg.ranked_path.empty())
        std::printf("ranked architectures written to %s\n", cfg.ranked_path.c_str());
    return 0;
}

int cmd_plot(const std::string& trend, const std::string& metrics, const std::string& out) {
    if (trend.empty() && metrics.empty())
        throw std::invalid_argument("plot needs --trend or --metrics");
    if (!trend.empty()) ulse::plot::plot_trend(resolve_path(trend), out);
    if (!metrics.empty()) ulse::plot::plot_metrics(resolve_path(metrics), out);
    std::printf("plot written to %s\n", out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ultra-lightweight causal speech enhancement toolkit"};
    app.require_subcommand(1);

    std::string in_path, out_path, ckpt_path, config_path, trend_path, metrics_path, out_dir;
    uint64_t seed = 0;
    int workers = 0;
    bool stream = false, json_style = false;

    auto* enhance = app.add_subcommand("enhance", "denoise a wav file with a trained model");
    enhance->add_option("--in", in_path, "input wav (16 kHz mono)")->required();
    enhance->add_option("--out", out_path, "output wav")->required();
    enhance->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
    enhance->add_flag("--stream", stream, "frame-by-frame streaming path");

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "train config (json)")->required();
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", out_path, "checkpoint output path");
    train->add_option("--log", metrics_path, "metric log path (json lines)");

    auto* search = app.add_subcommand("search", "run the architecture search");
    search->add_option("--config", config_path, "search config (json)")->required();
    search->add_option("--seed", seed, "override the config seed");
    search->add_option("--workers", workers, "evaluation worker count");
    search->add_option("--out-dir", out_dir, "directory for trend.tsv / ranked.json");

    auto* complexity = app.add_subcommand("complexity", "parameter and MACS audit");
    complexity->add_option("--config", config_path, "architecture config (json)")->required();
    complexity->add_flag("--json-style", json_style, "machine-readable output");

    auto* plot = app.add_subcommand("plot", "render trend/metric curves to svg");
    plot->add_option("--trend", trend_path, "reward trend table (tsv)");
    plot->add_option("--metrics", metrics_path, "training metric log (json lines)");
    plot->add_option("--out", out_path, "output svg path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (enhance->parsed()) return cmd_enhance(in_path, ckpt_path, out_path, stream);
        if (train->parsed()) return cmd_train(config_path, seed, out_path, metrics_path);
        if (search->parsed()) return cmd_search(config_path, seed, workers, out_dir);
        if (complexity->parsed()) return cmd_complexity(config_path, json_style);
        if (plot->parsed()) return cmd_plot(trend_path, metrics_path, out_path);
    } catch (const ulse::nn::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
