#include "ulse/mixer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ulse::train {

namespace {
constexpr size_t kMinSamples = 16000; // one second

double power(const std::vector<double>& x, size_t n) {
    double p = 0.0;
    for (size_t i = 0; i < n; ++i) p += x[i] * x[i];
    return p / double(n);
}
} // namespace

MixResult mix(const MixSpec& spec) {
    if (spec.snr_db < -5.0 || spec.snr_db > 15.0)
        throw std::invalid_argument("mix: snr_db outside [-5, 15]");
    if (spec.clean.size() < kMinSamples || spec.noise.size() < kMinSamples)
        throw std::invalid_argument("mix: clean and noise must be at least 1 s long");
    const size_t n = std::min(spec.clean.size(), spec.noise.size());
    const double pc = power(spec.clean, n);
    const double pn = power(spec.noise, n);
    if (pc <= 0.0) throw std::invalid_argument("mix: clean input is silent");
    if (pn <= 0.0) throw std::invalid_argument("mix: noise input is silent");

    MixResult out;
    out.noise_gain = std::sqrt(pc / pn) * std::pow(10.0, -spec.snr_db / 20.0);
    out.noisy.resize(n);
    out.target.assign(spec.clean.begin(), spec.clean.begin() + n);
    for (size_t i = 0; i < n; ++i) out.noisy[i] = spec.clean[i] + out.noise_gain * spec.noise[i];
    return out;
}

std::vector<double> synthetic_voice(double seconds, Rng& rng) {
    const size_t n = size_t(seconds * 16000.0);
    const double f0 = rng.uniform(120.0, 320.0);
    const int harmonics = 3 + rng.uniform_int(3);
    const double env_rate = rng.uniform(1.5, 4.0);
    const double env_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double vib = rng.uniform(0.0, 3.0);
    std::vector<double> x(n, 0.0);
    for (int h = 1; h <= harmonics; ++h) {
        const double amp = 1.0 / h;
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (size_t i = 0; i < n; ++i) {
            const double t = double(i) / 16000.0;
            const double f = f0 * h * (1.0 + 0.002 * std::sin(2.0 * M_PI * vib * t));
            x[i] += amp * std::sin(2.0 * M_PI * f * t + phase);
        }
    }
    double rms = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double t = double(i) / 16000.0;
        x[i] *= 0.55 + 0.45 * std::sin(2.0 * M_PI * env_rate * t + env_phase);
        rms += x[i] * x[i];
    }
    rms = std::sqrt(rms / n);
    for (auto& v : x) v *= 0.1 / (rms + 1e-12);
    return x;
}

std::vector<double> synthetic_noise(double seconds, Rng& rng) {
    const size_t n = size_t(seconds * 16000.0);
    std::vector<double> x(n);
    const double pole = rng.uniform(0.0, 0.9); // noise color
    double state = 0.0;
    for (size_t i = 0; i < n; ++i) {
        state = pole * state + (1.0 - pole) * rng.gaussian();
        x[i] = state;
    }
    double rms = 0.0;
    for (double v : x) rms += v * v;
    rms = std::sqrt(rms / n);
    for (auto& v : x) v *= 0.1 / (rms + 1e-12);
    return x;
}

std::vector<Pair> synthetic_set(const SyntheticConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<Pair> out;
    out.reserve(cfg.pairs);
    for (int i = 0; i < cfg.pairs; ++i) {
        MixSpec spec;
        spec.clean = synthetic_voice(cfg.seconds, rng);
        spec.noise = synthetic_noise(cfg.seconds, rng);
        spec.snr_db = rng.uniform(cfg.snr_lo, cfg.snr_hi);
        auto mixed = mix(spec);
        out.push_back({std::move(mixed.noisy), std::move(mixed.target)});
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open dataset manifest: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string clean, noise;
        if (!(ss >> clean >> noise))
            throw std::invalid_argument("manifest line needs clean and noise paths: " + line);
        out.emplace_back(clean, noise);
    }
    return out;
}

} // namespace ulse::train
