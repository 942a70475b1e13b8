#pragma once

#include <vector>

#include "ulse/frontend.hpp"

namespace ulse::train {

// Hybrid loss weights: total = alpha_w * sisnr + (1-beta_w) * mag
//                              + beta_w * (real + imag).
// compress is the magnitude power applied before the spectral MSEs.
struct LossWeights {
    double alpha_w = 0.01;
    double beta_w = 0.3;
    double compress = 0.3;
};

// Scale-invariant projection loss, -log10 of the energy ratio. The epsilon
// guard scales with the signal so the scale invariance is exact.
double sisnr_loss(const std::vector<double>& est, const std::vector<double>& ref);
// accumulates scale * dL/dest into grad
void sisnr_loss_grad(const std::vector<double>& est, const std::vector<double>& ref,
                     double scale, std::vector<double>& grad);

// conventional dB metric, 10*log10 with exact division
double sisnr_db(const std::vector<double>& est, const std::vector<double>& ref);

struct SpectralLossValues {
    double mag = 0.0, real = 0.0, imag = 0.0;
};

SpectralLossValues spectral_losses(const frontend::Spectrogram& est,
                                   const frontend::Spectrogram& ref, double compress = 0.3);

// weighted cotangent on the estimated spectrogram:
// grad += w_mag * dL_mag + w_ri * (dL_real + dL_imag)
void spectral_losses_grad(const frontend::Spectrogram& est, const frontend::Spectrogram& ref,
                          double compress, double w_mag, double w_ri,
                          frontend::Spectrogram& grad);

double hybrid_loss(const std::vector<double>& est_wave, const std::vector<double>& ref_wave,
                   const frontend::Spectrogram& est_spec, const frontend::Spectrogram& ref_spec,
                   const LossWeights& w);

// Convenience path used by the trainer: spectra are recomputed from the
// waveforms with the analysis front end, and the full gradient with respect
// to the estimated waveform is returned.
struct HybridResult {
    double loss = 0.0;
    double sisnr_term = 0.0;
    SpectralLossValues spectral;
    std::vector<double> grad_est; // dL/d est_wave
};

HybridResult hybrid_loss_with_grad(const std::vector<double>& est_wave,
                                   const std::vector<double>& ref_wave, const LossWeights& w);

} // namespace ulse::train
