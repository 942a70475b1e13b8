#pragma once

#include <string>
#include <vector>

#include "ulse/tensor.hpp"

namespace ulse::train {

struct MixSpec {
    double snr_db = 0.0; // in [-5, 15]
    std::vector<double> clean, noise;
};

struct MixResult {
    std::vector<double> noisy, target;
    double noise_gain = 0.0;
};

// Scales the noise so that 10*log10(P_clean/P_noise) hits snr_db, then adds.
// The target is the clean signal (no reverberation stage).
MixResult mix(const MixSpec& spec);

struct Pair {
    std::vector<double> noisy, clean;
};

struct SyntheticConfig {
    int pairs = 32;
    double seconds = 1.0;
    double snr_lo = -5.0, snr_hi = 15.0;
    uint64_t seed = 1;
};

// Desk-scale corpus: harmonic tones with slow envelopes mixed with colored
// noise at random SNRs.
std::vector<Pair> synthetic_set(const SyntheticConfig& cfg);
std::vector<double> synthetic_voice(double seconds, Rng& rng);
std::vector<double> synthetic_noise(double seconds, Rng& rng);

// Manifest: one "clean_path noise_path" pair per line; '#' comments allowed.
std::vector<std::pair<std::string, std::string>> load_manifest(const std::string& path);

} // namespace ulse::train
