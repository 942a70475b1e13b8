#pragma once

#include <cstdint>
#include <vector>

#include "ulse/tensor.hpp"

namespace ulse::kernels {

// Geometry of a 2-D convolution over (time, frequency). Time padding is
// causal: kt-1 zero frames on the past side, so frame t never reads frames
// beyond t. Frequency padding is symmetric-ish (extra tap on the right) and
// stride applies to the frequency axis only. transposed=true runs the
// scatter/upsampling variant used by decoder blocks; f_out is then the
// mirrored target width.
struct ConvGeom {
    int ci = 1, co = 1, groups = 1;
    int kt = 1, kf = 1;
    int stride = 1;
    int f_in = 1, f_out = 1;
    int pad_left = 0;
    bool transposed = false;

    int ci_g() const { return ci / groups; }
    int co_g() const { return co / groups; }
    size_t weight_count() const { return size_t(co) * ci_g() * kt * kf; }

    // ceil(f/stride), the "same"-style downsampling rule
    static int down_f(int f, int stride) { return (f + stride - 1) / stride; }
    // total frequency padding so that f_big -> f_small under (stride, kf)
    static int pad_total(int f_big, int f_small, int stride, int kf);

    static ConvGeom forward_geom(int ci, int co, int groups, int kt, int kf, int stride, int f_in);
    static ConvGeom transposed_geom(int ci, int co, int groups, int kt, int kf, int stride,
                                    int f_in, int f_target);
};

// Thread-local switches. force_reference routes the public entry points to
// the serial reference kernels (used by instrumentation tests); mac_probe,
// when set, is incremented once per multiply-accumulate executed by the
// reference kernels.
void set_force_reference(bool on);
bool force_reference();
void set_parallel_enabled(bool on);
bool parallel_enabled();
extern thread_local uint64_t* mac_probe;

struct ReferenceGuard {
    bool prev;
    explicit ReferenceGuard(uint64_t* probe = nullptr) : prev(force_reference()) {
        set_force_reference(true);
        mac_probe = probe;
    }
    ~ReferenceGuard() {
        set_force_reference(prev);
        mac_probe = nullptr;
    }
};

// Disables OpenMP inside a scope; used by worker pools running many models.
struct SerialGuard {
    bool prev;
    SerialGuard() : prev(parallel_enabled()) { set_parallel_enabled(false); }
    ~SerialGuard() { set_parallel_enabled(prev); }
};

// out is overwritten; gw/gb accumulate; gin is overwritten.
void conv_forward(const ConvGeom& g, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& in, Tensor& out);
void conv_grad_input(const ConvGeom& g, const std::vector<double>& w, const Tensor& gout,
                     Tensor& gin);
void conv_grad_params(const ConvGeom& g, const Tensor& in, const Tensor& gout,
                      std::vector<double>& gw, std::vector<double>& gb);

// y (rows) = M (rows x cols) * x (cols); y is overwritten when accumulate is
// false. The probe counts rows*cols multiplies.
void matvec(const double* m, int rows, int cols, const double* x, double* y, bool accumulate);

// Per-(channel, frame) frequency-axis matrix multiply: out[c,t,:] = M * in[c,t,:].
void freq_matmul(const std::vector<double>& m, int rows, int cols, const Tensor& in, Tensor& out);

namespace reference {
void conv_forward(const ConvGeom& g, const std::vector<double>& w, const std::vector<double>& b,
                  const Tensor& in, Tensor& out);
void conv_grad_input(const ConvGeom& g, const std::vector<double>& w, const Tensor& gout,
                     Tensor& gin);
void conv_grad_params(const ConvGeom& g, const Tensor& in, const Tensor& gout,
                      std::vector<double>& gw, std::vector<double>& gb);
void matvec(const double* m, int rows, int cols, const double* x, double* y, bool accumulate);
void freq_matmul(const std::vector<double>& m, int rows, int cols, const Tensor& in, Tensor& out);
} // namespace reference

} // namespace ulse::kernels
