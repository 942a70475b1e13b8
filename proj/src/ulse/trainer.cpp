#include "ulse/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ulse/wav.hpp"

namespace ulse::train {

namespace fe = ulse::frontend;
using json = nlohmann::json;

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open train config: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("train config is not valid JSON: ") + e.what());
    }
    TrainConfig cfg;
    if (j.contains("arch") && j["arch"].is_string())
        cfg.arch = nn::ArchitectureSpec::load(j["arch"].get<std::string>());
    else if (j.contains("arch"))
        cfg.arch = nn::ArchitectureSpec::from_json(j["arch"].dump());
    else
        throw std::invalid_argument("train config needs an 'arch' entry");
    cfg.seed = j.value("seed", uint64_t(1));
    cfg.steps = j.value("steps", 1000);
    cfg.batch = j.value("batch", 2);
    cfg.val_pairs = j.value("val_pairs", 6);
    cfg.val_every = j.value("val_every", 200);
    cfg.manifest = j.value("manifest", std::string());
    if (j.contains("data")) {
        const auto& d = j["data"];
        cfg.data.pairs = d.value("pairs", cfg.data.pairs);
        cfg.data.seconds = d.value("seconds", cfg.data.seconds);
        cfg.data.snr_lo = d.value("snr_lo", cfg.data.snr_lo);
        cfg.data.snr_hi = d.value("snr_hi", cfg.data.snr_hi);
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        cfg.schedule.kind = schedule_kind_from_name(s.value("kind", std::string("warmup_cosine")));
        cfg.schedule.warmup_steps = s.value("warmup_steps", cfg.schedule.warmup_steps);
        cfg.schedule.total_steps = s.value("total_steps", cfg.schedule.total_steps);
        cfg.schedule.lr_start = s.value("lr_start", cfg.schedule.lr_start);
        cfg.schedule.lr_peak = s.value("lr_peak", cfg.schedule.lr_peak);
        cfg.schedule.plateau_patience = s.value("plateau_patience", cfg.schedule.plateau_patience);
        cfg.schedule.plateau_factor = s.value("plateau_factor", cfg.schedule.plateau_factor);
    }
    cfg.log_path = j.value("log", std::string());
    cfg.checkpoint_path = j.value("checkpoint", std::string());
    cfg.arch.validate();
    return cfg;
}

namespace {

// Forward the noisy clip, apply the estimated mask, and return waveform +
// everything needed for the backward chain.
struct ForwardCtx {
    fe::Spectrogram noisy_spec;
    Tensor mask;
    std::vector<double> est;
    size_t padded_len = 0;
};

ForwardCtx forward_enhance(nn::Model& model, const std::vector<double>& noisy, bool train) {
    ForwardCtx ctx;
    std::vector<double> padded = noisy;
    if (padded.size() < size_t(fe::kFftSize)) padded.resize(fe::kFftSize, 0.0);
    const size_t rem = (padded.size() - fe::kFftSize) % fe::kHop;
    if (rem) padded.resize(padded.size() + (fe::kHop - rem), 0.0);
    ctx.padded_len = padded.size();

    ctx.noisy_spec = fe::stft(padded);
    ctx.mask = model.forward(fe::log_power(ctx.noisy_spec), train);
    ctx.est = fe::istft(nn::apply_mask(ctx.noisy_spec, ctx.mask));
    ctx.est.resize(noisy.size());
    return ctx;
}

} // namespace

double train_step_loss(nn::Model& model, const Pair& pair, const LossWeights& w,
                       double grad_scale) {
    auto ctx = forward_enhance(model, pair.noisy, true);
    auto hr = hybrid_loss_with_grad(ctx.est, pair.clean, w);

    // d est -> d masked spectrogram -> d mask
    std::vector<double> gpad = hr.grad_est;
    gpad.resize(ctx.padded_len, 0.0);
    auto gspec = fe::istft_adjoint(gpad, ctx.noisy_spec.frames);
    Tensor gmask(1, ctx.mask.t, ctx.mask.f);
    for (int t = 0; t < ctx.mask.t; ++t)
        for (int k = 0; k < fe::kBins; ++k) {
            const auto x = ctx.noisy_spec.at(t, k);
            const auto g = gspec.at(t, k);
            gmask.at(0, t, k) =
                grad_scale * (g.real() * x.real() + g.imag() * x.imag());
        }
    model.backward(gmask);
    return hr.loss;
}

ValReport validate(nn::Model& model, const std::vector<Pair>& val, const LossWeights& w) {
    ValReport r;
    for (const auto& p : val) {
        r.sisnr_noisy_db += sisnr_db(p.noisy, p.clean);
        auto ctx = forward_enhance(model, p.noisy, false);
        r.sisnr_enhanced_db += sisnr_db(ctx.est, p.clean);
        auto est_spec = fe::stft([&] {
            auto e = ctx.est;
            if (e.size() < size_t(fe::kFftSize)) e.resize(fe::kFftSize, 0.0);
            return e;
        }());
        auto ref = p.clean;
        if (ref.size() < size_t(fe::kFftSize)) ref.resize(fe::kFftSize, 0.0);
        r.val_loss += hybrid_loss(ctx.est, p.clean, est_spec, fe::stft(ref), w);
    }
    const double n = double(val.size());
    r.sisnr_noisy_db /= n;
    r.sisnr_enhanced_db /= n;
    r.val_loss /= n;
    return r;
}

TrainResult train(const TrainConfig& cfg) {
    std::vector<Pair> train_set, val_set;
    if (!cfg.manifest.empty()) {
        Rng rng(cfg.seed + 17);
        auto entries = load_manifest(cfg.manifest);
        if (entries.empty()) throw std::invalid_argument("manifest is empty: " + cfg.manifest);
        std::vector<Pair> all;
        for (const auto& [cpath, npath] : entries) {
            MixSpec spec;
            spec.clean = wav::read(cpath).samples;
            spec.noise = wav::read(npath).samples;
            spec.snr_db = rng.uniform(cfg.data.snr_lo, cfg.data.snr_hi);
            auto mixed = mix(spec);
            all.push_back({std::move(mixed.noisy), std::move(mixed.target)});
        }
        const int val_n = std::min<int>(cfg.val_pairs, int(all.size()) / 4 + 1);
        val_set.assign(all.end() - val_n, all.end());
        all.resize(all.size() - val_n);
        train_set = std::move(all);
    } else {
        SyntheticConfig dc = cfg.data;
        dc.seed = cfg.seed;
        train_set = synthetic_set(dc);
        dc.pairs = cfg.val_pairs;
        dc.seed = cfg.seed + 1000003;
        val_set = synthetic_set(dc);
    }
    if (train_set.empty()) throw std::invalid_argument("training set is empty");

    TrainResult result{nn::Model::assemble(cfg.arch, cfg.seed, false), {}, {}, {}};
    nn::Model& model = result.model;

    nn::ParamRefs refs;
    model.params(refs);
    Adam opt(refs);
    PlateauScheduler plateau(cfg.schedule);
    const int steps_per_epoch = std::max<size_t>(1, train_set.size() / size_t(cfg.batch));

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::app);
        if (!log) throw std::runtime_error("cannot open metric log: " + cfg.log_path);
    }
    auto log_line = [&](int step, double loss, const ValReport* val, double lr) {
        if (!log.is_open()) return;
        json j;
        j["step"] = step;
        j["loss"] = loss;
        j["lr"] = lr;
        if (val) {
            j["val_sisnr_noisy_db"] = val->sisnr_noisy_db;
            j["val_sisnr_enhanced_db"] = val->sisnr_enhanced_db;
            j["val_loss"] = val->val_loss;
        }
        log << j.dump() << "\n" << std::flush;
    };

    result.initial = validate(model, val_set, cfg.weights);

    Rng order(cfg.seed + 31);
    for (int step = 0; step < cfg.steps; ++step) {
        const double lr = cfg.schedule.kind == ScheduleKind::WarmupCosine
                              ? lr_at(std::min(step, cfg.schedule.total_steps), cfg.schedule)
                              : plateau.lr();
        model.zero_grads();
        double loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& pair = train_set[order.uniform_int(int(train_set.size()))];
            loss += train_step_loss(model, pair, cfg.weights, 1.0 / cfg.batch);
        }
        loss /= cfg.batch;
        if (!std::isfinite(loss))
            throw std::runtime_error("training diverged (non-finite loss) at step " +
                                     std::to_string(step));
        opt.step(refs, lr);
        result.loss_history.push_back(loss);

        const bool epoch_end = (step + 1) % steps_per_epoch == 0;
        if (cfg.schedule.kind == ScheduleKind::PlateauHalving && epoch_end) {
            auto v = validate(model, val_set, cfg.weights);
            plateau.observe(v.val_loss);
            log_line(step + 1, loss, &v, plateau.lr());
        } else if ((step + 1) % cfg.val_every == 0) {
            auto v = validate(model, val_set, cfg.weights);
            log_line(step + 1, loss, &v, lr);
        } else {
            log_line(step + 1, loss, nullptr, lr);
        }
    }

    result.final = validate(model, val_set, cfg.weights);
    if (!cfg.checkpoint_path.empty()) model.save(cfg.checkpoint_path);
    return result;
}

} // namespace ulse::train
