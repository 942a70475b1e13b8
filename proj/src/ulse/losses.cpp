#include "ulse/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ulse::train {

namespace fe = ulse::frontend;

namespace {
constexpr double kEps = 1e-8;
constexpr double kTiny = 1e-300;

struct Projection {
    double alpha = 0.0;  // <est,ref>/|ref|^2
    double target_e = 0.0, resid_e = 0.0;
};

Projection project(const std::vector<double>& est, const std::vector<double>& ref) {
    if (est.size() != ref.size())
        throw std::invalid_argument("sisnr: estimate and reference lengths differ");
    double dot_er = 0.0, ref_e = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
        dot_er += est[i] * ref[i];
        ref_e += ref[i] * ref[i];
    }
    if (ref_e <= 0.0) throw std::invalid_argument("sisnr: reference is all zero");
    Projection p;
    p.alpha = dot_er / ref_e;
    p.target_e = p.alpha * p.alpha * ref_e;
    for (size_t i = 0; i < ref.size(); ++i) {
        const double e = est[i] - p.alpha * ref[i];
        p.resid_e += e * e;
    }
    return p;
}

} // namespace

double sisnr_loss(const std::vector<double>& est, const std::vector<double>& ref) {
    const auto p = project(est, ref);
    const double guard = kEps * (p.target_e + p.resid_e) + kTiny;
    return -std::log10((p.target_e + guard) / (p.resid_e + guard));
}

void sisnr_loss_grad(const std::vector<double>& est, const std::vector<double>& ref, double scale,
                     std::vector<double>& grad) {
    const auto p = project(est, ref);
    const double guard = kEps * (p.target_e + p.resid_e) + kTiny;
    const double num = p.target_e + guard;
    const double den = p.resid_e + guard;
    const double c = -scale / std::log(10.0);
    // dX = 2*alpha*ref, dY = 2*(est - alpha*ref); guard carries eps*(dX+dY)
    for (size_t i = 0; i < est.size(); ++i) {
        const double dx = 2.0 * p.alpha * ref[i];
        const double dy = 2.0 * (est[i] - p.alpha * ref[i]);
        const double dg = kEps * (dx + dy);
        grad[i] += c * ((dx + dg) / num - (dy + dg) / den);
    }
}

double sisnr_db(const std::vector<double>& est, const std::vector<double>& ref) {
    const auto p = project(est, ref);
    return 10.0 * std::log10(p.target_e / (p.resid_e + kTiny));
}

SpectralLossValues spectral_losses(const frontend::Spectrogram& est,
                                   const frontend::Spectrogram& ref, double compress) {
    if (est.frames != ref.frames)
        throw std::invalid_argument("spectral loss: frame counts differ");
    const double q = 1.0 - compress; // magnitude power in the denominators
    SpectralLossValues out;
    const size_t n = est.v.size();
    for (size_t i = 0; i < n; ++i) {
        const double ea = std::abs(est.v[i]), ra = std::abs(ref.v[i]);
        const double dmag = std::pow(ea, compress) - std::pow(ra, compress);
        out.mag += dmag * dmag;
        const double ed = std::pow(std::max(ea, kEps), q);
        const double rd = std::pow(std::max(ra, kEps), q);
        const double dre = est.v[i].real() / ed - ref.v[i].real() / rd;
        const double dim = est.v[i].imag() / ed - ref.v[i].imag() / rd;
        out.real += dre * dre;
        out.imag += dim * dim;
    }
    out.mag /= double(n);
    out.real /= double(n);
    out.imag /= double(n);
    return out;
}

void spectral_losses_grad(const frontend::Spectrogram& est, const frontend::Spectrogram& ref,
                          double compress, double w_mag, double w_ri,
                          frontend::Spectrogram& grad) {
    const double q = 1.0 - compress;
    const size_t n = est.v.size();
    const double inv_n = 1.0 / double(n);
    for (size_t i = 0; i < n; ++i) {
        const double r = est.v[i].real(), im = est.v[i].imag();
        const double a = std::abs(est.v[i]);
        const double d = std::max(a, kEps);
        const double ra = std::abs(ref.v[i]);

        double gr = 0.0, gi = 0.0;

        // magnitude term: (a^c - ra^c)^2
        const double dmag = std::pow(a, compress) - std::pow(ra, compress);
        const double dadr = r / d, dadi = im / d;
        const double dpow = compress * std::pow(d, compress - 1.0);
        gr += w_mag * inv_n * 2.0 * dmag * dpow * dadr;
        gi += w_mag * inv_n * 2.0 * dmag * dpow * dadi;

        // compressed real / imaginary terms
        const double ed = std::pow(d, q);
        const double rd = std::pow(std::max(ra, kEps), q);
        const double ure = r / ed - ref.v[i].real() / rd;
        const double uim = im / ed - ref.v[i].imag() / rd;
        if (a > kEps) {
            const double am = std::pow(a, -q);         // a^{-q}
            const double am2 = q * std::pow(a, -q - 2.0); // q a^{-q-2}
            // d(r/a^q)/dr = a^{-q} - q r^2 a^{-q-2}; d(r/a^q)/di = -q r i a^{-q-2}
            gr += w_ri * inv_n * 2.0 * (ure * (am - am2 * r * r) + uim * (-am2 * r * im));
            gi += w_ri * inv_n * 2.0 * (uim * (am - am2 * im * im) + ure * (-am2 * r * im));
        } else {
            const double am = std::pow(kEps, -q);
            gr += w_ri * inv_n * 2.0 * ure * am;
            gi += w_ri * inv_n * 2.0 * uim * am;
        }
        grad.v[i] += fe::cplx(gr, gi);
    }
}

double hybrid_loss(const std::vector<double>& est_wave, const std::vector<double>& ref_wave,
                   const frontend::Spectrogram& est_spec, const frontend::Spectrogram& ref_spec,
                   const LossWeights& w) {
    const double si = sisnr_loss(est_wave, ref_wave);
    const auto sp = spectral_losses(est_spec, ref_spec, w.compress);
    return w.alpha_w * si + (1.0 - w.beta_w) * sp.mag + w.beta_w * (sp.real + sp.imag);
}

HybridResult hybrid_loss_with_grad(const std::vector<double>& est_wave,
                                   const std::vector<double>& ref_wave, const LossWeights& w) {
    HybridResult out;
    std::vector<double> est_pad = est_wave, ref_pad = ref_wave;
    if (est_pad.size() < size_t(fe::kFftSize)) est_pad.resize(fe::kFftSize, 0.0);
    if (ref_pad.size() < size_t(fe::kFftSize)) ref_pad.resize(fe::kFftSize, 0.0);

    auto est_spec = fe::stft(est_pad);
    auto ref_spec = fe::stft(ref_pad);

    out.sisnr_term = sisnr_loss(est_wave, ref_wave);
    out.spectral = spectral_losses(est_spec, ref_spec, w.compress);
    out.loss = w.alpha_w * out.sisnr_term + (1.0 - w.beta_w) * out.spectral.mag +
               w.beta_w * (out.spectral.real + out.spectral.imag);

    out.grad_est.assign(est_wave.size(), 0.0);
    sisnr_loss_grad(est_wave, ref_wave, w.alpha_w, out.grad_est);

    fe::Spectrogram gspec(est_spec.frames);
    spectral_losses_grad(est_spec, ref_spec, w.compress, 1.0 - w.beta_w, w.beta_w, gspec);
    auto gwave = fe::stft_adjoint(gspec, est_pad.size());
    for (size_t i = 0; i < out.grad_est.size(); ++i) out.grad_est[i] += gwave[i];
    return out;
}

} // namespace ulse::train
