// Times the OpenMP convolution kernels against the serial reference on
// model-sized workloads. Run with OMP_NUM_THREADS set to compare scaling.

#include <chrono>
#include <cstdio>
#include <omp.h>
#include <vector>

#include "ulse/kernels.hpp"
#include "ulse/tensor.hpp"

using namespace ulse;
using kernels::ConvGeom;
using clock_type = std::chrono::steady_clock;

namespace {

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Workload {
    const char* name;
    ConvGeom geom;
    int frames;
};

void run(const Workload& w, int reps) {
    Rng rng(7);
    Tensor in(w.geom.ci, w.frames, w.geom.f_in);
    for (auto& v : in.v) v = rng.gaussian();
    std::vector<double> weights(w.geom.weight_count()), bias(w.geom.co);
    for (auto& v : weights) v = rng.gaussian();
    for (auto& v : bias) v = rng.gaussian();
    Tensor out(w.geom.co, w.frames, w.geom.f_out), out_ref = out;

    auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) kernels::reference::conv_forward(w.geom, weights, bias, in, out_ref);
    const double serial = seconds_since(t0) / reps;

    t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) kernels::conv_forward(w.geom, weights, bias, in, out);
    const double parallel = seconds_since(t0) / reps;

    const double diff = max_abs_diff(out, out_ref);
    const double macs = double(w.geom.kt) * w.geom.kf * w.geom.ci_g() * w.geom.co * w.geom.f_out *
                        w.frames;
    std::printf("%-22s %10.0f MACs  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  (max diff %g)\n",
                w.name, macs, serial * 1e3, parallel * 1e3, serial / parallel, diff);
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    const int frames = 256; // about 4 s of audio
    const Workload workloads[] = {
        {"conv 1->16 k3x3 s2", ConvGeom::forward_geom(1, 16, 1, 3, 3, 2, 129), frames},
        {"conv 16->16 k3x3", ConvGeom::forward_geom(16, 16, 1, 3, 3, 1, 33), frames},
        {"pointwise 16->32", ConvGeom::forward_geom(16, 32, 1, 1, 1, 1, 65), frames},
        {"depthwise 32 k3x3 s2", ConvGeom::forward_geom(32, 32, 32, 3, 3, 2, 65), frames},
        {"grouped 24->24 g2 k2x3", ConvGeom::forward_geom(24, 24, 2, 2, 3, 1, 33), frames},
        {"transposed 16->16 s2", ConvGeom::transposed_geom(16, 16, 1, 3, 3, 2, 33, 65), frames},
        {"transposed 12->1 s2", ConvGeom::transposed_geom(12, 1, 1, 3, 3, 2, 65, 129), frames},
    };
    for (const auto& w : workloads) run(w, 20);
    return 0;
}
