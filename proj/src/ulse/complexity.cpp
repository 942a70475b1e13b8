#include "ulse/complexity.hpp"

#include <json.hpp>

#include <cstdio>

#include "ulse/frontend.hpp"

namespace ulse::complexity {

ComplexityReport report(const nn::Model& model) {
    ComplexityReport r;
    r.frame_rate = frontend::kFrameRate;
    r.per_layer = model.report();
    for (const auto& e : r.per_layer) {
        r.params_total += e.params;
        r.macs_per_frame += e.macs_per_frame;
    }
    r.macs_per_second = r.macs_per_frame * r.frame_rate;
    r.notes = {
        "band merge/split matrix multiplies included",
        "recurrent gate biases excluded from MACS",
        "BN, LayerNorm, elementwise activations and affine activation terms excluded",
        "Rep blocks reported in merged (inference) form",
    };
    return r;
}

int64_t count_params(const nn::Model& model) { return report(model).params_total; }

double count_macs(const nn::Model& model) { return report(model).macs_per_second; }

std::string format_text(const ComplexityReport& r) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %12s %16s\n", "layer", "params", "macs/frame");
    out += buf;
    for (const auto& e : r.per_layer) {
        std::snprintf(buf, sizeof buf, "%-28s %12lld %16.0f\n", e.name.c_str(),
                      (long long)e.params, e.macs_per_frame);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-28s %12lld %16.0f\n", "total", (long long)r.params_total,
                  r.macs_per_frame);
    out += buf;
    std::snprintf(buf, sizeof buf, "params: %.2fk\nmacs: %.2fM/s (frame rate %.1f/s)\n",
                  r.params_total / 1e3, r.macs_per_second / 1e6, r.frame_rate);
    out += buf;
    for (const auto& n : r.notes) out += "note: " + n + "\n";
    return out;
}

std::string format_json(const ComplexityReport& r) {
    nlohmann::json j;
    j["params_total"] = r.params_total;
    j["macs_per_second"] = r.macs_per_second;
    j["macs_per_frame"] = r.macs_per_frame;
    j["frame_rate"] = r.frame_rate;
    j["notes"] = r.notes;
    for (const auto& e : r.per_layer)
        j["per_layer"].push_back({{"name", e.name}, {"params", e.params},
                                  {"macs_per_frame", e.macs_per_frame}});
    return j.dump(2) + "\n";
}

} // namespace ulse::complexity
