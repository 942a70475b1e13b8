#include "ulse/plot.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ulse::plot {

namespace {
constexpr int kW = 860, kH = 480;
constexpr int kL = 70, kR = 180, kT = 50, kB = 55;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}
} // namespace

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) { xmin = 0; xmax = 1; ymin = 0; ymax = 1; }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * (kW - kL - kR); };
    auto py = [&](double y) { return kH - kB - (y - ymin) / (ymax - ymin) * (kH - kT - kB); };

    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write plot: " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16' "
         "font-family='sans-serif'>" << title << "</text>\n";

    // frame and gridlines
    f << "<rect x='" << kL << "' y='" << kT << "' width='" << kW - kL - kR << "' height='"
      << kH - kT - kB << "' fill='none' stroke='#444'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double gy = ymin + (ymax - ymin) * i / 4.0;
        f << "<line x1='" << kL << "' y1='" << py(gy) << "' x2='" << kW - kR << "' y2='" << py(gy)
          << "' stroke='#ddd'/>\n";
        f << "<text x='" << kL - 6 << "' y='" << py(gy) + 4
          << "' text-anchor='end' font-size='11' font-family='sans-serif'>" << fmt(gy)
          << "</text>\n";
        const double gx = xmin + (xmax - xmin) * i / 4.0;
        f << "<text x='" << px(gx) << "' y='" << kH - kB + 18
          << "' text-anchor='middle' font-size='11' font-family='sans-serif'>" << fmt(gx)
          << "</text>\n";
    }
    f << "<text x='" << (kL + kW - kR) / 2 << "' y='" << kH - 12
      << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << x_label
      << "</text>\n";
    f << "<text x='16' y='" << (kT + kH - kB) / 2
      << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 16 "
      << (kT + kH - kB) / 2 << ")'>" << y_label << "</text>\n";

    int ci = 0;
    for (const auto& s : series) {
        const char* color = kColors[ci % 6];
        f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.6' points='";
        for (auto [x, y] : s.points) f << px(x) << "," << py(y) << " ";
        f << "'/>\n";
        f << "<line x1='" << kW - kR + 12 << "' y1='" << kT + 16 + 18 * ci << "' x2='"
          << kW - kR + 34 << "' y2='" << kT + 16 + 18 * ci << "' stroke='" << color
          << "' stroke-width='2'/>\n";
        f << "<text x='" << kW - kR + 40 << "' y='" << kT + 20 + 18 * ci
          << "' font-size='12' font-family='sans-serif'>" << s.name << "</text>\n";
        ++ci;
    }
    f << "</svg>\n";
}

void plot_trend(const std::string& trend_tsv, const std::string& out_svg) {
    std::ifstream f(trend_tsv);
    if (!f) throw std::invalid_argument("cannot open trend table: " + trend_tsv);
    std::string header;
    std::getline(f, header);
    Series top1{"top-1", {}}, top5{"top-5", {}}, top25{"top-25", {}}, mean{"episode mean", {}};
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        long long episode, sampled, distinct;
        double t1, t5, t25, em, eb, lr;
        if (!(ss >> episode >> sampled >> distinct >> t1 >> t5 >> t25 >> em >> eb >> lr)) continue;
        top1.points.push_back({double(sampled), t1});
        top5.points.push_back({double(sampled), t5});
        top25.points.push_back({double(sampled), t25});
        mean.points.push_back({double(sampled), em});
    }
    if (top1.points.empty()) throw std::invalid_argument("trend table has no rows: " + trend_tsv);
    svg_line_chart(out_svg, "Rewards of top models", "sampled models", "reward",
                   {top1, top5, top25, mean});
}

void plot_metrics(const std::string& metrics_jsonl, const std::string& out_svg) {
    std::ifstream f(metrics_jsonl);
    if (!f) throw std::invalid_argument("cannot open metric log: " + metrics_jsonl);
    Series loss{"train loss", {}}, val{"val sisnr gain (dB)", {}};
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("step")) continue;
        const double step = j["step"].get<double>();
        if (j.contains("loss")) loss.points.push_back({step, j["loss"].get<double>()});
        if (j.contains("val_sisnr_enhanced_db") && j.contains("val_sisnr_noisy_db"))
            val.points.push_back({step, j["val_sisnr_enhanced_db"].get<double>() -
                                            j["val_sisnr_noisy_db"].get<double>()});
    }
    if (loss.points.empty()) throw std::invalid_argument("metric log has no rows: " + metrics_jsonl);
    std::vector<Series> series{loss};
    if (!val.points.empty()) series.push_back(val);
    svg_line_chart(out_svg, "Training curves", "step", "value", series);
}

} // namespace ulse::plot
