#pragma once

#include <string>
#include <vector>

namespace ulse::plot {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal deterministic SVG line chart (axes, grid, legend).
void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series);

// reward-trend table (TSV from the search) -> reward curves
void plot_trend(const std::string& trend_tsv, const std::string& out_svg);

// training metric log (JSON lines) -> loss and validation curves
void plot_metrics(const std::string& metrics_jsonl, const std::string& out_svg);

} // namespace ulse::plot
