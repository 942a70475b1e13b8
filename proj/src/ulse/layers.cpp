#include "ulse/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ulse::nn {

void init_uniform(std::vector<double>& w, double bound, Rng& rng) {
    for (auto& x : w) x = rng.uniform(-bound, bound);
}

// --------------------------------------------------------------------- Conv2d

namespace {
struct ConvState final : StreamState {
    Tensor hist; // [C x (kt-1) x F] past input frames, oldest first
    explicit ConvState(int c, int kt, int f) : hist(c, std::max(kt - 1, 0), f) {}
};
} // namespace

Conv2d::Conv2d(const kernels::ConvGeom& geom, const std::string& name, Rng& rng, bool with_bias)
    : geom_(geom), has_bias_(with_bias) {
    weight.resize(name + ".weight", geom.weight_count());
    const double k = 1.0 / std::sqrt(double(geom.ci_g()) * geom.kt * geom.kf);
    init_uniform(weight.w, k, rng);
    if (has_bias_) {
        bias.resize(name + ".bias", size_t(geom.co));
        init_uniform(bias.w, k, rng);
    }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
    Tensor y(geom_.co, x.t, geom_.f_out);
    kernels::conv_forward(geom_, weight.w, bias.w, x, y);
    if (train) cached_in_ = x;
    return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
    kernels::conv_grad_params(geom_, cached_in_, gy, weight.g, bias.g);
    Tensor gx(geom_.ci, gy.t, geom_.f_in);
    kernels::conv_grad_input(geom_, weight.w, gy, gx);
    return gx;
}

StatePtr Conv2d::make_state() const {
    return std::make_unique<ConvState>(geom_.ci, geom_.kt, geom_.f_in);
}

Tensor Conv2d::step(const Tensor& x_frame, StreamState& state) const {
    auto& st = dynamic_cast<ConvState&>(state);
    const int kt = geom_.kt;
    if (kt == 1) {
        Tensor y(geom_.co, 1, geom_.f_out);
        kernels::conv_forward(geom_, weight.w, bias.w, x_frame, y);
        return y;
    }
    Tensor window(geom_.ci, kt, geom_.f_in);
    for (int c = 0; c < geom_.ci; ++c) {
        for (int h = 0; h < kt - 1; ++h)
            std::copy(st.hist.row(c, h), st.hist.row(c, h) + geom_.f_in, window.row(c, h));
        std::copy(x_frame.row(c, 0), x_frame.row(c, 0) + geom_.f_in, window.row(c, kt - 1));
    }
    Tensor y_all(geom_.co, kt, geom_.f_out);
    kernels::conv_forward(geom_, weight.w, bias.w, window, y_all);
    Tensor y(geom_.co, 1, geom_.f_out);
    for (int c = 0; c < geom_.co; ++c)
        std::copy(y_all.row(c, kt - 1), y_all.row(c, kt - 1) + geom_.f_out, y.row(c, 0));
    // slide history
    for (int c = 0; c < geom_.ci; ++c) {
        for (int h = 0; h + 1 < kt - 1; ++h)
            std::copy(window.row(c, h + 1), window.row(c, h + 1) + geom_.f_in, st.hist.row(c, h));
        std::copy(x_frame.row(c, 0), x_frame.row(c, 0) + geom_.f_in, st.hist.row(c, kt - 2));
    }
    return y;
}

void Conv2d::params(ParamRefs& out) {
    out.push_back({&weight});
    if (has_bias_) out.push_back({&bias});
}

int64_t Conv2d::param_count() const {
    return int64_t(weight.size()) + (has_bias_ ? geom_.co : 0);
}

double Conv2d::macs_per_frame() const {
    return double(geom_.kt) * geom_.kf * geom_.ci_g() * geom_.co * geom_.f_out;
}

// ----------------------------------------------------------------- BatchNorm

BatchNorm2d::BatchNorm2d(int channels, const std::string& name) : channels_(channels) {
    gamma.resize(name + ".gamma", channels);
    beta.resize(name + ".beta", channels);
    std::fill(gamma.w.begin(), gamma.w.end(), 1.0);
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    if (!train) return eval_only(x);
    const int n = x.t * x.f;
    Tensor y(x.c, x.t, x.f);
    cached_xhat_ = Tensor(x.c, x.t, x.f);
    cached_inv_std_.assign(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
        double mean = 0.0;
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) mean += x.at(c, t, f);
        mean /= n;
        double var = 0.0;
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) {
                double d = x.at(c, t, f) - mean;
                var += d * d;
            }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kEps);
        cached_inv_std_[c] = inv;
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) {
                double xh = (x.at(c, t, f) - mean) * inv;
                cached_xhat_.at(c, t, f) = xh;
                y.at(c, t, f) = gamma.w[c] * xh + beta.w[c];
            }
        running_mean[c] = (1.0 - kMomentum) * running_mean[c] + kMomentum * mean;
        running_var[c] = (1.0 - kMomentum) * running_var[c] + kMomentum * var;
    }
    return y;
}

Tensor BatchNorm2d::eval_only(const Tensor& x) const {
    Tensor y(x.c, x.t, x.f);
    for (int c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(running_var[c] + kEps);
        const double a = gamma.w[c] * inv;
        const double b = beta.w[c] - running_mean[c] * a;
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) y.at(c, t, f) = a * x.at(c, t, f) + b;
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
    const int n = gy.t * gy.f;
    Tensor gx(gy.c, gy.t, gy.f);
    for (int c = 0; c < channels_; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int t = 0; t < gy.t; ++t)
            for (int f = 0; f < gy.f; ++f) {
                sum_gy += gy.at(c, t, f);
                sum_gy_xhat += gy.at(c, t, f) * cached_xhat_.at(c, t, f);
            }
        gamma.g[c] += sum_gy_xhat;
        beta.g[c] += sum_gy;
        const double inv = cached_inv_std_[c];
        for (int t = 0; t < gy.t; ++t)
            for (int f = 0; f < gy.f; ++f) {
                double g = gy.at(c, t, f) * gamma.w[c];
                double corr = (sum_gy * gamma.w[c] + cached_xhat_.at(c, t, f) *
                                                         sum_gy_xhat * gamma.w[c]) /
                              n;
                gx.at(c, t, f) = inv * (g - corr);
            }
    }
    return gx;
}

void BatchNorm2d::params(ParamRefs& out) {
    out.push_back({&gamma});
    out.push_back({&beta});
}

void BatchNorm2d::set_affine_passthrough(const std::vector<double>& scale,
                                         const std::vector<double>& shift) {
    for (int c = 0; c < channels_; ++c) {
        running_mean[c] = 0.0;
        running_var[c] = 1.0 - kEps;
        gamma.w[c] = scale[c];
        beta.w[c] = shift[c];
    }
}

void BatchNorm2d::effective(std::vector<double>& a, std::vector<double>& b) const {
    a.assign(channels_, 0.0);
    b.assign(channels_, 0.0);
    for (int c = 0; c < channels_; ++c) {
        a[c] = gamma.w[c] / std::sqrt(running_var[c] + kEps);
        b[c] = beta.w[c] - running_mean[c] * a[c];
    }
}

// --------------------------------------------------------------------- PReLU

PReLU::PReLU(int channels, const std::string& name, double init) : channels_(channels) {
    alpha.resize(name + ".alpha", channels);
    std::fill(alpha.w.begin(), alpha.w.end(), init);
}

Tensor PReLU::forward(const Tensor& x, bool train) {
    if (train) cached_in_ = x;
    return eval_only(x);
}

Tensor PReLU::eval_only(const Tensor& x) const {
    Tensor y(x.c, x.t, x.f);
    for (int c = 0; c < x.c; ++c) {
        const double a = alpha.w[c];
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) {
                double v = x.at(c, t, f);
                y.at(c, t, f) = v > 0.0 ? v : a * v;
            }
    }
    return y;
}

Tensor PReLU::backward(const Tensor& gy) {
    Tensor gx(gy.c, gy.t, gy.f);
    for (int c = 0; c < gy.c; ++c) {
        double ga = 0.0;
        for (int t = 0; t < gy.t; ++t)
            for (int f = 0; f < gy.f; ++f) {
                double v = cached_in_.at(c, t, f);
                double g = gy.at(c, t, f);
                gx.at(c, t, f) = v > 0.0 ? g : alpha.w[c] * g;
                if (v < 0.0) ga += g * v;
            }
        alpha.g[c] += ga;
    }
    return gx;
}

void PReLU::params(ParamRefs& out) { out.push_back({&alpha}); }

// -------------------------------------------------------------------- APReLU

APReLU::APReLU(int channels, int freq, const std::string& name)
    : channels_(channels), freq_(freq) {
    gamma.resize(name + ".gamma", size_t(channels) * freq);
    beta.resize(name + ".beta", size_t(channels) * freq);
    alpha.resize(name + ".alpha", channels);
    std::fill(gamma.w.begin(), gamma.w.end(), 1.0);
    std::fill(alpha.w.begin(), alpha.w.end(), 0.25);
}

Tensor APReLU::forward(const Tensor& x, bool train) {
    if (x.c != channels_ || x.f != freq_)
        throw std::invalid_argument("aprelu shape mismatch: " + x.shape_str());
    if (train) cached_in_ = x;
    return eval_only(x);
}

Tensor APReLU::eval_only(const Tensor& x) const {
    if (x.c != channels_ || x.f != freq_)
        throw std::invalid_argument("aprelu shape mismatch: " + x.shape_str());
    Tensor y(x.c, x.t, x.f);
    for (int c = 0; c < x.c; ++c) {
        const double a = alpha.w[c];
        for (int t = 0; t < x.t; ++t)
            for (int f = 0; f < x.f; ++f) {
                const double v = x.at(c, t, f);
                const size_t cf = size_t(c) * freq_ + f;
                y.at(c, t, f) = gamma.w[cf] * v + beta.w[cf] + std::max(0.0, v) +
                                a * std::min(0.0, v);
            }
    }
    return y;
}

Tensor APReLU::backward(const Tensor& gy) {
    Tensor gx(gy.c, gy.t, gy.f);
    for (int c = 0; c < gy.c; ++c) {
        double ga = 0.0;
        for (int t = 0; t < gy.t; ++t)
            for (int f = 0; f < gy.f; ++f) {
                const double v = cached_in_.at(c, t, f);
                const double g = gy.at(c, t, f);
                const size_t cf = size_t(c) * freq_ + f;
                gamma.g[cf] += g * v;
                beta.g[cf] += g;
                if (v < 0.0) ga += g * v;
                gx.at(c, t, f) = g * (gamma.w[cf] + (v > 0.0 ? 1.0 : alpha.w[c]));
            }
        alpha.g[c] += ga;
    }
    return gx;
}

void APReLU::params(ParamRefs& out) {
    out.push_back({&gamma});
    out.push_back({&beta});
    out.push_back({&alpha});
}

// -------------------------------------------------------------------- Linear

Linear::Linear(int in, int out, const std::string& name, Rng& rng) : in_(in), out_(out) {
    weight.resize(name + ".weight", size_t(out) * in);
    bias.resize(name + ".bias", out);
    const double k = 1.0 / std::sqrt(double(in));
    init_uniform(weight.w, k, rng);
    init_uniform(bias.w, k, rng);
}

std::vector<double> Linear::forward(const std::vector<double>& x, int rows, bool train) {
    std::vector<double> y(size_t(rows) * out_);
    for (int r = 0; r < rows; ++r) {
        kernels::matvec(weight.w.data(), out_, in_, x.data() + size_t(r) * in_,
                        y.data() + size_t(r) * out_, false);
        for (int o = 0; o < out_; ++o) y[size_t(r) * out_ + o] += bias.w[o];
    }
    if (train) {
        cached_in_ = x;
        cached_rows_ = rows;
    }
    return y;
}

std::vector<double> Linear::infer(const std::vector<double>& x, int rows) const {
    std::vector<double> y(size_t(rows) * out_);
    for (int r = 0; r < rows; ++r) {
        kernels::matvec(weight.w.data(), out_, in_, x.data() + size_t(r) * in_,
                        y.data() + size_t(r) * out_, false);
        for (int o = 0; o < out_; ++o) y[size_t(r) * out_ + o] += bias.w[o];
    }
    return y;
}

std::vector<double> Linear::backward(const std::vector<double>& gy, int rows) {
    std::vector<double> gx(size_t(rows) * in_, 0.0);
    for (int r = 0; r < rows; ++r) {
        const double* g = gy.data() + size_t(r) * out_;
        const double* x = cached_in_.data() + size_t(r) * in_;
        for (int o = 0; o < out_; ++o) {
            bias.g[o] += g[o];
            double* wrow_g = weight.g.data() + size_t(o) * in_;
            const double* wrow = weight.w.data() + size_t(o) * in_;
            for (int i = 0; i < in_; ++i) {
                wrow_g[i] += g[o] * x[i];
                gx[size_t(r) * in_ + i] += wrow[i] * g[o];
            }
        }
    }
    return gx;
}

void Linear::params(ParamRefs& out) {
    out.push_back({&weight});
    out.push_back({&bias});
}

// --------------------------------------------------------------- LayerNormCF

LayerNormCF::LayerNormCF(int channels, int freq, const std::string& name)
    : channels_(channels), freq_(freq) {
    gamma.resize(name + ".gamma", size_t(channels) * freq);
    beta.resize(name + ".beta", size_t(channels) * freq);
    std::fill(gamma.w.begin(), gamma.w.end(), 1.0);
}

Tensor LayerNormCF::forward(const Tensor& x, bool train) {
    const int k = channels_ * freq_;
    Tensor y(x.c, x.t, x.f);
    if (train) {
        cached_xhat_ = Tensor(x.c, x.t, x.f);
        cached_inv_std_.assign(x.t, 0.0);
    }
    for (int t = 0; t < x.t; ++t) {
        double mean = 0.0;
        for (int c = 0; c < x.c; ++c)
            for (int f = 0; f < x.f; ++f) mean += x.at(c, t, f);
        mean /= k;
        double var = 0.0;
        for (int c = 0; c < x.c; ++c)
            for (int f = 0; f < x.f; ++f) {
                double d = x.at(c, t, f) - mean;
                var += d * d;
            }
        var /= k;
        const double inv = 1.0 / std::sqrt(var + kEps);
        if (train) cached_inv_std_[t] = inv;
        for (int c = 0; c < x.c; ++c)
            for (int f = 0; f < x.f; ++f) {
                double xh = (x.at(c, t, f) - mean) * inv;
                if (train) cached_xhat_.at(c, t, f) = xh;
                y.at(c, t, f) = gamma.w[size_t(c) * freq_ + f] * xh + beta.w[size_t(c) * freq_ + f];
            }
    }
    return y;
}

Tensor LayerNormCF::infer(const Tensor& x) const {
    return const_cast<LayerNormCF*>(this)->forward(x, false);
}

Tensor LayerNormCF::backward(const Tensor& gy) {
    const int k = channels_ * freq_;
    Tensor gx(gy.c, gy.t, gy.f);
    for (int t = 0; t < gy.t; ++t) {
        double sum_g = 0.0, sum_g_xhat = 0.0;
        for (int c = 0; c < gy.c; ++c)
            for (int f = 0; f < gy.f; ++f) {
                const size_t cf = size_t(c) * freq_ + f;
                const double xh = cached_xhat_.at(c, t, f);
                const double g = gy.at(c, t, f) * gamma.w[cf];
                gamma.g[cf] += gy.at(c, t, f) * xh;
                beta.g[cf] += gy.at(c, t, f);
                sum_g += g;
                sum_g_xhat += g * xh;
            }
        const double inv = cached_inv_std_[t];
        for (int c = 0; c < gy.c; ++c)
            for (int f = 0; f < gy.f; ++f) {
                const size_t cf = size_t(c) * freq_ + f;
                const double xh = cached_xhat_.at(c, t, f);
                const double g = gy.at(c, t, f) * gamma.w[cf];
                gx.at(c, t, f) = inv * (g - sum_g / k - xh * sum_g_xhat / k);
            }
    }
    return gx;
}

void LayerNormCF::params(ParamRefs& out) {
    out.push_back({&gamma});
    out.push_back({&beta});
}

// ----------------------------------------------------------------------- GRU

GRU::GRU(int in, int hidden, const std::string& name, Rng& rng, bool dual_bias)
    : in_(in), hidden_(hidden), dual_bias_(dual_bias) {
    w_ih.resize(name + ".w_ih", size_t(3) * hidden * in);
    w_hh.resize(name + ".w_hh", size_t(3) * hidden * hidden);
    b_ih.resize(name + ".b_ih", size_t(3) * hidden);
    const double k = 1.0 / std::sqrt(double(hidden));
    init_uniform(w_ih.w, k, rng);
    init_uniform(w_hh.w, k, rng);
    init_uniform(b_ih.w, k, rng);
    if (dual_bias_) {
        b_hh.resize(name + ".b_hh", size_t(3) * hidden);
        init_uniform(b_hh.w, k, rng);
    }
}

int64_t GRU::param_count() const {
    return int64_t(w_ih.size()) + w_hh.size() + b_ih.size() + b_hh.size();
}

std::vector<double> GRU::forward(const std::vector<double>& x, int seqs, int steps, bool train,
                                 bool reverse) {
    const int h = hidden_;
    std::vector<double> y(size_t(seqs) * steps * h, 0.0);
    if (train) {
        seqs_ = seqs;
        steps_ = steps;
        reverse_ = reverse;
        c_x_ = x;
        c_h_.assign(size_t(seqs) * steps * h, 0.0);
        c_r_ = c_h_;
        c_z_ = c_h_;
        c_n_ = c_h_;
        c_m_ = c_h_;
    }
    std::vector<double> gi(3 * h), gh(3 * h), hstate(h);
    for (int s = 0; s < seqs; ++s) {
        std::fill(hstate.begin(), hstate.end(), 0.0);
        for (int step = 0; step < steps; ++step) {
            const int t = reverse ? steps - 1 - step : step;
            const double* xt = x.data() + (size_t(s) * steps + t) * in_;
            kernels::matvec(w_ih.w.data(), 3 * h, in_, xt, gi.data(), false);
            for (int i = 0; i < 3 * h; ++i) gi[i] += b_ih.w[i];
            kernels::matvec(w_hh.w.data(), 3 * h, h, hstate.data(), gh.data(), false);
            if (dual_bias_)
                for (int i = 0; i < 3 * h; ++i) gh[i] += b_hh.w[i];
            const size_t base = (size_t(s) * steps + step) * h; // logical order
            for (int i = 0; i < h; ++i) {
                const double r = sigmoid(gi[i] + gh[i]);
                const double z = sigmoid(gi[h + i] + gh[h + i]);
                const double m = gh[2 * h + i];
                const double n = std::tanh(gi[2 * h + i] + r * m);
                if (train) {
                    c_h_[base + i] = hstate[i];
                    c_r_[base + i] = r;
                    c_z_[base + i] = z;
                    c_n_[base + i] = n;
                    c_m_[base + i] = m;
                }
                hstate[i] = (1.0 - z) * n + z * hstate[i];
            }
            std::copy(hstate.begin(), hstate.end(), y.begin() + (size_t(s) * steps + t) * h);
        }
    }
    return y;
}

std::vector<double> GRU::backward(const std::vector<double>& gy) {
    const int h = hidden_, seqs = seqs_, steps = steps_;
    std::vector<double> gx(size_t(seqs) * steps * in_, 0.0);
    std::vector<double> gh_acc(h), gates(3 * h), hgates(3 * h);
    for (int s = 0; s < seqs; ++s) {
        std::fill(gh_acc.begin(), gh_acc.end(), 0.0);
        for (int step = steps - 1; step >= 0; --step) {
            const int t = reverse_ ? steps - 1 - step : step;
            const size_t base = (size_t(s) * steps + step) * h;
            const double* xt = c_x_.data() + (size_t(s) * steps + t) * in_;
            for (int i = 0; i < h; ++i) {
                const double ghd = gy[(size_t(s) * steps + t) * h + i] + gh_acc[i];
                const double r = c_r_[base + i], z = c_z_[base + i];
                const double n = c_n_[base + i], m = c_m_[base + i];
                const double hp = c_h_[base + i];
                const double gz = ghd * (hp - n) * z * (1.0 - z);
                const double gn = ghd * (1.0 - z) * (1.0 - n * n);
                const double gr = gn * m * r * (1.0 - r);
                const double gm = gn * r;
                gates[i] = gr;
                gates[h + i] = gz;
                gates[2 * h + i] = gn;
                hgates[i] = gr;
                hgates[h + i] = gz;
                hgates[2 * h + i] = gm;
                gh_acc[i] = ghd * z;
            }
            // parameter grads
            for (int row = 0; row < 3 * h; ++row) {
                b_ih.g[row] += gates[row];
                if (dual_bias_) b_hh.g[row] += hgates[row];
                double* wg = w_ih.g.data() + size_t(row) * in_;
                for (int i = 0; i < in_; ++i) wg[i] += gates[row] * xt[i];
                double* ug = w_hh.g.data() + size_t(row) * h;
                const double* hprev = c_h_.data() + base;
                for (int i = 0; i < h; ++i) ug[i] += hgates[row] * hprev[i];
            }
            // grads to x and previous hidden
            double* gxt = gx.data() + (size_t(s) * steps + t) * in_;
            for (int row = 0; row < 3 * h; ++row) {
                const double* wr = w_ih.w.data() + size_t(row) * in_;
                for (int i = 0; i < in_; ++i) gxt[i] += wr[i] * gates[row];
                const double* ur = w_hh.w.data() + size_t(row) * h;
                for (int i = 0; i < h; ++i) gh_acc[i] += ur[i] * hgates[row];
            }
        }
    }
    return gx;
}

std::vector<double> GRU::infer(const std::vector<double>& x, int seqs, int steps,
                               bool reverse) const {
    const int h = hidden_;
    std::vector<double> y(size_t(seqs) * steps * h, 0.0);
    std::vector<double> hstate(h);
    for (int s = 0; s < seqs; ++s) {
        std::fill(hstate.begin(), hstate.end(), 0.0);
        for (int stepi = 0; stepi < steps; ++stepi) {
            const int t = reverse ? steps - 1 - stepi : stepi;
            step(x.data() + (size_t(s) * steps + t) * in_, hstate);
            std::copy(hstate.begin(), hstate.end(), y.begin() + (size_t(s) * steps + t) * h);
        }
    }
    return y;
}

void GRU::step(const double* x, std::vector<double>& h) const {
    const int hs = hidden_;
    std::vector<double> gi(3 * hs), gh(3 * hs);
    kernels::matvec(w_ih.w.data(), 3 * hs, in_, x, gi.data(), false);
    for (int i = 0; i < 3 * hs; ++i) gi[i] += b_ih.w[i];
    kernels::matvec(w_hh.w.data(), 3 * hs, hs, h.data(), gh.data(), false);
    if (dual_bias_)
        for (int i = 0; i < 3 * hs; ++i) gh[i] += b_hh.w[i];
    for (int i = 0; i < hs; ++i) {
        const double r = sigmoid(gi[i] + gh[i]);
        const double z = sigmoid(gi[hs + i] + gh[hs + i]);
        const double n = std::tanh(gi[2 * hs + i] + r * gh[2 * hs + i]);
        h[i] = (1.0 - z) * n + z * h[i];
    }
}

void GRU::params(ParamRefs& out) {
    out.push_back({&w_ih});
    out.push_back({&w_hh});
    out.push_back({&b_ih});
    if (dual_bias_) out.push_back({&b_hh});
}

// ------------------------------------------------------------ channel shuffle

Tensor channel_shuffle(const Tensor& x, int groups) {
    if (groups <= 0 || x.c % groups)
        throw std::invalid_argument("channel_shuffle: channels not divisible by groups");
    if (groups == 1) return x;
    const int k = x.c / groups;
    Tensor y(x.c, x.t, x.f);
    for (int g = 0; g < groups; ++g)
        for (int i = 0; i < k; ++i) {
            const int src = g * k + i, dst = i * groups + g;
            for (int t = 0; t < x.t; ++t)
                std::copy(x.row(src, t), x.row(src, t) + x.f, y.row(dst, t));
        }
    return y;
}

Tensor channel_unshuffle(const Tensor& x, int groups) {
    if (groups <= 0 || x.c % groups)
        throw std::invalid_argument("channel_unshuffle: channels not divisible by groups");
    return channel_shuffle(x, x.c / groups);
}

} // namespace ulse::nn
