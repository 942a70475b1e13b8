#include "ulse/kernels.hpp"

#include <algorithm>
#include <stdexcept>

namespace ulse::kernels {

static thread_local bool g_force_reference = false;
static thread_local bool g_parallel = true;
thread_local uint64_t* mac_probe = nullptr;

void set_force_reference(bool on) { g_force_reference = on; }
bool force_reference() { return g_force_reference; }
void set_parallel_enabled(bool on) { g_parallel = on; }
bool parallel_enabled() { return g_parallel; }

int ConvGeom::pad_total(int f_big, int f_small, int stride, int kf) {
    return std::max(0, (f_small - 1) * stride + kf - f_big);
}

ConvGeom ConvGeom::forward_geom(int ci, int co, int groups, int kt, int kf, int stride, int f_in) {
    ConvGeom g;
    g.ci = ci; g.co = co; g.groups = groups;
    g.kt = kt; g.kf = kf; g.stride = stride;
    g.f_in = f_in;
    g.f_out = down_f(f_in, stride);
    g.pad_left = pad_total(f_in, g.f_out, stride, kf) / 2;
    g.transposed = false;
    if (ci % groups || co % groups)
        throw std::invalid_argument("conv channels not divisible by groups");
    return g;
}

ConvGeom ConvGeom::transposed_geom(int ci, int co, int groups, int kt, int kf, int stride,
                                   int f_in, int f_target) {
    ConvGeom g;
    g.ci = ci; g.co = co; g.groups = groups;
    g.kt = kt; g.kf = kf; g.stride = stride;
    g.f_in = f_in;
    g.f_out = f_target;
    g.pad_left = pad_total(f_target, f_in, stride, kf) / 2;
    g.transposed = true;
    if (ci % groups || co % groups)
        throw std::invalid_argument("conv channels not divisible by groups");
    return g;
}

static void check_conv_shapes(const ConvGeom& g, const Tensor& in, const Tensor& out) {
    if (in.c != g.ci || in.f != g.f_in)
        throw std::invalid_argument("conv input shape mismatch: got " + in.shape_str());
    if (out.c != g.co || out.f != g.f_out || out.t != in.t)
        throw std::invalid_argument("conv output shape mismatch: got " + out.shape_str());
}

// Zero-extended reads. For the transposed variant the frequency index is on
// the zero-stuffed upsampled grid.
static inline double read_std(const Tensor& in, int c, int t, int fi) {
    if (t < 0 || t >= in.t || fi < 0 || fi >= in.f) return 0.0;
    return in.at(c, t, fi);
}

static inline double read_stuffed(const Tensor& in, int stride, int c, int t, int p) {
    if (t < 0 || t >= in.t || p < 0) return 0.0;
    if (p % stride) return 0.0;
    int fi = p / stride;
    if (fi >= in.f) return 0.0;
    return in.at(c, t, fi);
}

namespace reference {

void conv_forward(const ConvGeom& g, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& in, Tensor& out) {
    check_conv_shapes(g, in, out);
    const int cig = g.ci_g(), cog = g.co_g();
    for (int co = 0; co < g.co; ++co) {
        const int ci0 = (co / cog) * cig;
        for (int t = 0; t < in.t; ++t) {
            for (int fo = 0; fo < g.f_out; ++fo) {
                double acc = b.empty() ? 0.0 : b[co];
                for (int c = 0; c < cig; ++c) {
                    const double* wr = &w[((size_t(co) * cig + c) * g.kt) * g.kf];
                    for (int a = 0; a < g.kt; ++a) {
                        for (int kb = 0; kb < g.kf; ++kb) {
                            double x;
                            if (!g.transposed)
                                x = read_std(in, ci0 + c, t + a - (g.kt - 1),
                                             fo * g.stride + kb - g.pad_left);
                            else
                                x = read_stuffed(in, g.stride, ci0 + c, t - a,
                                                 fo + g.pad_left - kb);
                            acc += wr[a * g.kf + kb] * x;
                            if (mac_probe) ++*mac_probe;
                        }
                    }
                }
                out.at(co, t, fo) = acc;
            }
        }
    }
}

void conv_grad_input(const ConvGeom& g, const std::vector<double>& w, const Tensor& gout,
                     Tensor& gin) {
    check_conv_shapes(g, gin, gout);
    const int cig = g.ci_g(), cog = g.co_g();
    gin.zero();
    for (int ci = 0; ci < g.ci; ++ci) {
        const int grp = ci / cig, c = ci % cig;
        for (int t = 0; t < gin.t; ++t) {
            for (int fi = 0; fi < g.f_in; ++fi) {
                double acc = 0.0;
                for (int oc = 0; oc < cog; ++oc) {
                    const int co = grp * cog + oc;
                    const double* wr = &w[((size_t(co) * cig + c) * g.kt) * g.kf];
                    for (int a = 0; a < g.kt; ++a) {
                        for (int kb = 0; kb < g.kf; ++kb) {
                            double gy;
                            if (!g.transposed) {
                                // out(t', fo) reads in(t, fi) when t' = t - a + kt-1
                                // and fo*stride = fi + pad - kb
                                int tp = t - a + (g.kt - 1);
                                int num = fi + g.pad_left - kb;
                                if (num < 0 || num % g.stride) continue;
                                int fo = num / g.stride;
                                if (fo < 0 || fo >= g.f_out) { continue; }
                                gy = read_std(gout, co, tp, fo);
                            } else {
                                // out(t', fu) reads stuffed(t, fi*stride) when
                                // t' = t + a and fu = fi*stride + kb - pad
                                gy = read_std(gout, co, t + a, fi * g.stride + kb - g.pad_left);
                            }
                            acc += wr[a * g.kf + kb] * gy;
                        }
                    }
                }
                gin.at(ci, t, fi) = acc;
            }
        }
    }
}

void conv_grad_params(const ConvGeom& g, const Tensor& in, const Tensor& gout,
                      std::vector<double>& gw, std::vector<double>& gb) {
    check_conv_shapes(g, in, gout);
    const int cig = g.ci_g(), cog = g.co_g();
    for (int co = 0; co < g.co; ++co) {
        const int ci0 = (co / cog) * cig;
        double gbias = 0.0;
        for (int t = 0; t < gout.t; ++t)
            for (int fo = 0; fo < g.f_out; ++fo) gbias += gout.at(co, t, fo);
        if (!gb.empty()) gb[co] += gbias;
        for (int c = 0; c < cig; ++c) {
            for (int a = 0; a < g.kt; ++a) {
                for (int kb = 0; kb < g.kf; ++kb) {
                    double acc = 0.0;
                    for (int t = 0; t < gout.t; ++t) {
                        for (int fo = 0; fo < g.f_out; ++fo) {
                            double x;
                            if (!g.transposed)
                                x = read_std(in, ci0 + c, t + a - (g.kt - 1),
                                             fo * g.stride + kb - g.pad_left);
                            else
                                x = read_stuffed(in, g.stride, ci0 + c, t - a,
                                                 fo + g.pad_left - kb);
                            acc += gout.at(co, t, fo) * x;
                        }
                    }
                    gw[((size_t(co) * cig + c) * g.kt + a) * g.kf + kb] += acc;
                }
            }
        }
    }
}

void matvec(const double* m, int rows, int cols, const double* x, double* y, bool accumulate) {
    for (int r = 0; r < rows; ++r) {
        double acc = accumulate ? y[r] : 0.0;
        const double* mr = m + size_t(r) * cols;
        for (int c = 0; c < cols; ++c) {
            acc += mr[c] * x[c];
            if (mac_probe) ++*mac_probe;
        }
        y[r] = acc;
    }
}

void freq_matmul(const std::vector<double>& m, int rows, int cols, const Tensor& in, Tensor& out) {
    if (in.f != cols || out.f != rows || in.c != out.c || in.t != out.t)
        throw std::invalid_argument("freq_matmul shape mismatch");
    for (int c = 0; c < in.c; ++c)
        for (int t = 0; t < in.t; ++t)
            matvec(m.data(), rows, cols, in.row(c, t), out.row(c, t), false);
}

} // namespace reference

void conv_forward(const ConvGeom& g, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& in, Tensor& out) {
    if (force_reference()) { reference::conv_forward(g, w, b, in, out); return; }
    check_conv_shapes(g, in, out);
    const int cig = g.ci_g(), cog = g.co_g();
    const int T = in.t;
#pragma omp parallel for collapse(2) if (g_parallel)
    for (int co = 0; co < g.co; ++co) {
        for (int t = 0; t < T; ++t) {
            const int ci0 = (co / cog) * cig;
            for (int fo = 0; fo < g.f_out; ++fo) {
                double acc = b.empty() ? 0.0 : b[co];
                for (int c = 0; c < cig; ++c) {
                    const double* wr = &w[((size_t(co) * cig + c) * g.kt) * g.kf];
                    if (!g.transposed) {
                        for (int a = 0; a < g.kt; ++a) {
                            const int ti = t + a - (g.kt - 1);
                            if (ti < 0) continue;
                            for (int kb = 0; kb < g.kf; ++kb) {
                                const int fi = fo * g.stride + kb - g.pad_left;
                                if (fi < 0 || fi >= g.f_in) continue;
                                acc += wr[a * g.kf + kb] * in.at(ci0 + c, ti, fi);
                            }
                        }
                    } else {
                        for (int a = 0; a < g.kt; ++a) {
                            const int ti = t - a;
                            if (ti < 0) continue;
                            for (int kb = 0; kb < g.kf; ++kb) {
                                const int p = fo + g.pad_left - kb;
                                if (p < 0 || p % g.stride) continue;
                                const int fi = p / g.stride;
                                if (fi >= g.f_in) continue;
                                acc += wr[a * g.kf + kb] * in.at(ci0 + c, ti, fi);
                            }
                        }
                    }
                }
                out.at(co, t, fo) = acc;
            }
        }
    }
}

void conv_grad_input(const ConvGeom& g, const std::vector<double>& w, const Tensor& gout,
                     Tensor& gin) {
    if (force_reference()) { reference::conv_grad_input(g, w, gout, gin); return; }
    check_conv_shapes(g, gin, gout);
    const int cig = g.ci_g(), cog = g.co_g();
    const int T = gin.t;
#pragma omp parallel for collapse(2) if (g_parallel)
    for (int ci = 0; ci < g.ci; ++ci) {
        for (int t = 0; t < T; ++t) {
            const int grp = ci / cig, c = ci % cig;
            for (int fi = 0; fi < g.f_in; ++fi) {
                double acc = 0.0;
                for (int oc = 0; oc < cog; ++oc) {
                    const int co = grp * cog + oc;
                    const double* wr = &w[((size_t(co) * cig + c) * g.kt) * g.kf];
                    if (!g.transposed) {
                        for (int kb = 0; kb < g.kf; ++kb) {
                            const int num = fi + g.pad_left - kb;
                            if (num < 0 || num % g.stride) continue;
                            const int fo = num / g.stride;
                            if (fo >= g.f_out) continue;
                            for (int a = 0; a < g.kt; ++a) {
                                const int tp = t - a + (g.kt - 1);
                                if (tp >= T) continue;
                                acc += wr[a * g.kf + kb] * gout.at(co, tp, fo);
                            }
                        }
                    } else {
                        for (int kb = 0; kb < g.kf; ++kb) {
                            const int fu = fi * g.stride + kb - g.pad_left;
                            if (fu < 0 || fu >= g.f_out) continue;
                            for (int a = 0; a < g.kt; ++a) {
                                const int tp = t + a;
                                if (tp >= T) continue;
                                acc += wr[a * g.kf + kb] * gout.at(co, tp, fu);
                            }
                        }
                    }
                }
                gin.at(ci, t, fi) = acc;
            }
        }
    }
}

void conv_grad_params(const ConvGeom& g, const Tensor& in, const Tensor& gout,
                      std::vector<double>& gw, std::vector<double>& gb) {
    if (force_reference()) { reference::conv_grad_params(g, in, gout, gw, gb); return; }
    check_conv_shapes(g, in, gout);
    const int cig = g.ci_g(), cog = g.co_g();
#pragma omp parallel for if (g_parallel)
    for (int co = 0; co < g.co; ++co) {
        const int ci0 = (co / cog) * cig;
        double gbias = 0.0;
        for (int t = 0; t < gout.t; ++t)
            for (int fo = 0; fo < g.f_out; ++fo) gbias += gout.at(co, t, fo);
        if (!gb.empty()) gb[co] += gbias;
        for (int c = 0; c < cig; ++c) {
            for (int a = 0; a < g.kt; ++a) {
                for (int kb = 0; kb < g.kf; ++kb) {
                    double acc = 0.0;
                    for (int t = 0; t < gout.t; ++t) {
                        for (int fo = 0; fo < g.f_out; ++fo) {
                            double x;
                            if (!g.transposed)
                                x = read_std(in, ci0 + c, t + a - (g.kt - 1),
                                             fo * g.stride + kb - g.pad_left);
                            else
                                x = read_stuffed(in, g.stride, ci0 + c, t - a,
                                                 fo + g.pad_left - kb);
                            acc += gout.at(co, t, fo) * x;
                        }
                    }
                    gw[((size_t(co) * cig + c) * g.kt + a) * g.kf + kb] += acc;
                }
            }
        }
    }
}

void matvec(const double* m, int rows, int cols, const double* x, double* y, bool accumulate) {
    reference::matvec(m, rows, cols, x, y, accumulate);
}

void freq_matmul(const std::vector<double>& m, int rows, int cols, const Tensor& in, Tensor& out) {
    if (force_reference()) { reference::freq_matmul(m, rows, cols, in, out); return; }
    if (in.f != cols || out.f != rows || in.c != out.c || in.t != out.t)
        throw std::invalid_argument("freq_matmul shape mismatch");
    const int T = in.t;
#pragma omp parallel for collapse(2) if (g_parallel)
    for (int c = 0; c < in.c; ++c)
        for (int t = 0; t < T; ++t)
            reference::matvec(m.data(), rows, cols, in.row(c, t), out.row(c, t), false);
}

} // namespace ulse::kernels
