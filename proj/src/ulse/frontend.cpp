#include "ulse/frontend.hpp"

#include <cmath>
#include <stdexcept>

#include "ulse/fft.hpp"
#include "ulse/kernels.hpp"

namespace ulse::frontend {

namespace {
constexpr double kEnvGuard = 1e-8;

std::vector<double> make_hann() {
    std::vector<double> w(kFftSize);
    for (int n = 0; n < kFftSize; ++n)
        w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / kFftSize);
    return w;
}
} // namespace

const std::vector<double>& hann_window() {
    static const std::vector<double> w = make_hann();
    return w;
}

int frame_count(size_t samples) {
    if (samples < size_t(kFftSize))
        throw std::invalid_argument("waveform shorter than one analysis window (512 samples)");
    return 1 + int((samples - kFftSize) / kHop);
}

Spectrogram stft(const std::vector<double>& wave) {
    for (double s : wave)
        if (!std::isfinite(s)) throw std::invalid_argument("waveform contains non-finite samples");
    const int T = frame_count(wave.size());
    const auto& w = hann_window();
    Spectrogram spec(T);
    std::vector<double> frame(kFftSize);
#pragma omp parallel for firstprivate(frame) if (kernels::parallel_enabled())
    for (int t = 0; t < T; ++t) {
        const double* x = wave.data() + size_t(t) * kHop;
        for (int n = 0; n < kFftSize; ++n) frame[n] = x[n] * w[n];
        auto bins = fft::rfft(frame);
        std::copy(bins.begin(), bins.end(), spec.v.begin() + size_t(t) * kBins);
    }
    return spec;
}

std::vector<double> istft(const Spectrogram& spec) {
    if (spec.frames < 1) return {};
    const auto& w = hann_window();
    const size_t len = size_t(spec.frames - 1) * kHop + kFftSize;
    std::vector<double> acc(len, 0.0), env(len, 0.0);
    for (int t = 0; t < spec.frames; ++t) {
        std::vector<cplx> bins(spec.v.begin() + size_t(t) * kBins,
                               spec.v.begin() + size_t(t + 1) * kBins);
        auto frame = fft::irfft(bins, kFftSize);
        const size_t off = size_t(t) * kHop;
        for (int n = 0; n < kFftSize; ++n) {
            acc[off + n] += frame[n];
            env[off + n] += w[n];
        }
    }
    std::vector<double> out(len, 0.0);
    for (size_t n = 0; n < len; ++n)
        if (env[n] > kEnvGuard) out[n] = acc[n] / env[n];
    return out;
}

std::vector<double> stft_adjoint(const Spectrogram& gspec, size_t wave_len) {
    const auto& w = hann_window();
    std::vector<double> gx(wave_len, 0.0);
    for (int t = 0; t < gspec.frames; ++t) {
        std::vector<cplx> gbins(gspec.v.begin() + size_t(t) * kBins,
                                gspec.v.begin() + size_t(t + 1) * kBins);
        auto gframe = fft::rfft_adjoint(gbins, kFftSize);
        const size_t off = size_t(t) * kHop;
        for (int n = 0; n < kFftSize && off + n < wave_len; ++n)
            gx[off + n] += w[n] * gframe[n];
    }
    return gx;
}

Spectrogram istft_adjoint(const std::vector<double>& gwave, int frames) {
    const auto& w = hann_window();
    const size_t len = size_t(frames - 1) * kHop + kFftSize;
    std::vector<double> env(len, 0.0);
    for (int t = 0; t < frames; ++t)
        for (int n = 0; n < kFftSize; ++n) env[size_t(t) * kHop + n] += w[n];

    Spectrogram gspec(frames);
    std::vector<double> gframe(kFftSize);
    for (int t = 0; t < frames; ++t) {
        const size_t off = size_t(t) * kHop;
        for (int n = 0; n < kFftSize; ++n) {
            const size_t i = off + n;
            gframe[n] = (i < gwave.size() && env[i] > kEnvGuard) ? gwave[i] / env[i] : 0.0;
        }
        auto gbins = fft::irfft_adjoint(gframe);
        std::copy(gbins.begin(), gbins.end(), gspec.v.begin() + size_t(t) * kBins);
    }
    return gspec;
}

Tensor log_power(const Spectrogram& spec) {
    Tensor out(1, spec.frames, kBins);
    for (int t = 0; t < spec.frames; ++t)
        for (int k = 0; k < kBins; ++k)
            out.at(0, t, k) = std::log(std::norm(spec.at(t, k)) + kLogEps);
    return out;
}

OlaSynth::OlaSynth() : acc_(kFftSize, 0.0), env_(kFftSize, 0.0) {}

std::vector<double> OlaSynth::push(const cplx* frame) {
    std::vector<cplx> bins(frame, frame + kBins);
    auto time = fft::irfft(bins, kFftSize);
    const auto& w = hann_window();
    for (int n = 0; n < kFftSize; ++n) {
        acc_[n] += time[n];
        env_[n] += w[n];
    }
    any_ = true;
    std::vector<double> out(kHop, 0.0);
    for (int n = 0; n < kHop; ++n)
        if (env_[n] > kEnvGuard) out[n] = acc_[n] / env_[n];
    // slide by one hop
    std::copy(acc_.begin() + kHop, acc_.end(), acc_.begin());
    std::fill(acc_.begin() + (kFftSize - kHop), acc_.end(), 0.0);
    std::copy(env_.begin() + kHop, env_.end(), env_.begin());
    std::fill(env_.begin() + (kFftSize - kHop), env_.end(), 0.0);
    return out;
}

std::vector<double> OlaSynth::finish() {
    if (!any_) return {};
    std::vector<double> out(kFftSize - kHop, 0.0);
    for (int n = 0; n < kFftSize - kHop; ++n)
        if (env_[n] > kEnvGuard) out[n] = acc_[n] / env_[n];
    return out;
}

namespace {

double erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }

} // namespace

ErbFilterbank ErbFilterbank::make() {
    ErbFilterbank fb;
    const int n_pass = fb.passthrough_count; // 65
    const int n_bands = kErbBands - n_pass;  // 64 ERB bands over 192 bins
    fb.merge_matrix.assign(size_t(kErbBands) * kBins, 0.0);
    fb.split_matrix.assign(size_t(kBins) * kErbBands, 0.0);

    for (int k = 0; k < n_pass; ++k) fb.merge_matrix[size_t(k) * kBins + k] = 1.0;

    // 64 triangles with centers uniform on the ERB-rate scale from the first
    // compressed bin (2031.25 Hz) to Nyquist; the end filters peak exactly on
    // bins 65 and 256, so every compressed bin has nonzero weight somewhere
    const double bin_hz = kSampleRate / kFftSize;
    const double e_lo = erb_rate(n_pass * bin_hz);
    const double e_hi = erb_rate(8000.0);
    const double step = (e_hi - e_lo) / (n_bands - 1);

    for (int i = 0; i < n_bands; ++i) {
        const double center = e_lo + i * step;
        double* row = &fb.merge_matrix[size_t(n_pass + i) * kBins];
        double sum = 0.0;
        for (int k = n_pass; k < kBins; ++k) {
            const double e = erb_rate(k * bin_hz);
            const double tri = std::max(0.0, 1.0 - std::fabs(e - center) / step);
            row[k] = tri;
            sum += tri;
        }
        for (int k = n_pass; k < kBins; ++k) row[k] /= sum;
    }

    // split rows are the merge columns, L1-normalized per bin
    for (int k = 0; k < kBins; ++k) {
        double colsum = 0.0;
        for (int j = 0; j < kErbBands; ++j) colsum += fb.merge_matrix[size_t(j) * kBins + k];
        for (int j = 0; j < kErbBands; ++j)
            fb.split_matrix[size_t(k) * kErbBands + j] =
                fb.merge_matrix[size_t(j) * kBins + k] / colsum;
    }
    return fb;
}

const ErbFilterbank& ErbFilterbank::instance() {
    static const ErbFilterbank fb = make();
    return fb;
}

Tensor band_merge(const Tensor& feat, const ErbFilterbank& fb) {
    if (feat.f != kBins)
        throw std::invalid_argument("band_merge expects 257 bins, got " + feat.shape_str());
    Tensor out(feat.c, feat.t, kErbBands);
    kernels::freq_matmul(fb.merge_matrix, kErbBands, kBins, feat, out);
    return out;
}

Tensor band_split(const Tensor& feat, const ErbFilterbank& fb) {
    if (feat.f != kErbBands)
        throw std::invalid_argument("band_split expects 129 bands, got " + feat.shape_str());
    Tensor out(feat.c, feat.t, kBins);
    kernels::freq_matmul(fb.split_matrix, kBins, kErbBands, feat, out);
    return out;
}

} // namespace ulse::frontend
