#pragma once

#include <string>
#include <vector>

namespace ulse::wav {

// Mono 16 kHz waveforms only. 16-bit PCM and 32-bit float containers are
// accepted; anything else (including multi-channel) is rejected.
struct Clip {
    std::vector<double> samples;
    int sample_rate = 16000;
};

Clip read(const std::string& path);
void write(const std::string& path, const Clip& clip, bool float32 = false);

} // namespace ulse::wav
