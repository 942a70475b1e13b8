#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulse/network.hpp"

namespace ulse::complexity {

// Analytical parameter and MACS accounting. Conventions: one MAC is one
// multiply plus one accumulate; convolutions count kt*kf*Cin*Cout*Fout/G per
// frame (transposed convolutions on the output-pixel basis); recurrences
// count gate-matrix MACs per sequence position; linear layers count their
// weight matrix per application. BatchNorm, LayerNorm, elementwise
// activations, affine activation terms and bias additions are excluded.
// Fixed band-merge/band-split matrix multiplies are included and flagged.
struct ComplexityReport {
    int64_t params_total = 0;
    double macs_per_second = 0.0;
    double macs_per_frame = 0.0;
    double frame_rate = 62.5;
    std::vector<nn::LayerReport> per_layer;
    std::vector<std::string> notes;
};

int64_t count_params(const nn::Model& model);
double count_macs(const nn::Model& model); // multiply-accumulates per second
ComplexityReport report(const nn::Model& model);

std::string format_text(const ComplexityReport& r);
std::string format_json(const ComplexityReport& r);

} // namespace ulse::complexity
