#pragma once

#include <complex>
#include <vector>

#include "ulse/tensor.hpp"

namespace ulse::frontend {

// 32 ms Hann analysis window, 16 ms hop, 512-point FFT at 16 kHz.
constexpr int kFftSize = 512;
constexpr int kHop = 256;
constexpr int kBins = 257;
constexpr double kSampleRate = 16000.0;
constexpr double kFrameRate = kSampleRate / kHop; // 62.5 frames/s
constexpr double kLogEps = 1e-12;

using cplx = std::complex<double>;

struct Spectrogram {
    int frames = 0;
    std::vector<cplx> v; // frames x kBins

    Spectrogram() = default;
    explicit Spectrogram(int t) : frames(t), v(size_t(t) * kBins) {}
    cplx& at(int t, int k) { return v[size_t(t) * kBins + k]; }
    cplx at(int t, int k) const { return v[size_t(t) * kBins + k]; }
};

const std::vector<double>& hann_window();

// Number of complete analysis frames of a waveform (no padding); throws for
// waveforms shorter than one window.
int frame_count(size_t samples);

// Frame t covers samples [t*kHop, t*kHop + kFftSize); nothing later.
Spectrogram stft(const std::vector<double>& wave);

// Overlap-add of inverse frames divided by the accumulated analysis-window
// sum. Exact inverse of stft wherever the window sum is nonzero; output
// length is (frames-1)*kHop + kFftSize.
std::vector<double> istft(const Spectrogram& spec);

// Adjoints of the two linear maps, for loss backpropagation.
std::vector<double> stft_adjoint(const Spectrogram& gspec, size_t wave_len);
Spectrogram istft_adjoint(const std::vector<double>& gwave, int frames);

// log(|X|^2 + eps) as a [1 x T x 257] feature map.
Tensor log_power(const Spectrogram& spec);

// Streaming synthesis: one hop of output per pushed frame, identical to the
// batch istft sample-for-sample.
class OlaSynth {
public:
    OlaSynth();
    // frame: kBins one-sided spectrum; returns kHop samples
    std::vector<double> push(const cplx* frame);
    // remaining kFftSize - kHop samples after the last frame
    std::vector<double> finish();

private:
    std::vector<double> acc_, env_;
    bool any_ = false;
};

// 65 pass-through low bins plus 64 triangular ERB-spaced filters covering
// the remaining 192 bins; merge maps 257 -> 129, split maps back.
struct ErbFilterbank {
    std::vector<double> merge_matrix; // 129 x 257, rows sum to 1
    std::vector<double> split_matrix; // 257 x 129, rows sum to 1
    int passthrough_count = 65;

    static const ErbFilterbank& instance();
    static ErbFilterbank make();
};

constexpr int kErbBands = 129;

Tensor band_merge(const Tensor& feat, const ErbFilterbank& fb);
Tensor band_split(const Tensor& feat, const ErbFilterbank& fb);

} // namespace ulse::frontend
